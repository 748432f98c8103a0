//! Operation counts for the update algorithm and the bounds they are held to.
//!
//! One scalar multiply-add counts as one unit. The baseline is `ℓ N³`, the cost
//! of re-running `ℓ` dense iterations on the whole graph.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size parameters of a stored state and the delta applied to it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurements {
    /// Live vertices.
    pub n: usize,
    /// Size of the structural set.
    pub s: usize,
    /// Depth of `(G, S)`.
    pub k: usize,
    /// Largest number of branches starting at, ending at, or passing through a vertex.
    pub m: usize,
    /// Iteration budget.
    pub ell: usize,
    /// Number of delta operations.
    pub p: usize,
}

/// The relations `p ≪ s ≪ N`, `k + p ≪ N` and `p (k+1) m ≪ N³`, where
/// `a ≪ b` is read as `a ≤ ratio · b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasConditions {
    pub ratio: f64,
    pub p_vs_s: bool,
    pub s_vs_n: bool,
    pub depth_vs_n: bool,
    pub branch_work_vs_n3: bool,
}

impl MeasConditions {
    pub fn all(&self) -> bool {
        self.p_vs_s && self.s_vs_n && self.depth_vs_n && self.branch_work_vs_n3
    }
}

impl Measurements {
    pub fn meas_conditions(&self, ratio: f64) -> MeasConditions {
        let (n, s, k, m, p) = (
            self.n as f64,
            self.s as f64,
            self.k as f64,
            self.m as f64,
            self.p as f64,
        );
        MeasConditions {
            ratio,
            p_vs_s: p <= ratio * s,
            s_vs_n: s <= ratio * n,
            depth_vs_n: k + p <= ratio * n,
            branch_work_vs_n3: p * (k + 1.0) * m <= ratio * n.powi(3),
        }
    }

    /// `ℓ N³`.
    pub fn baseline(&self) -> f64 {
        self.ell as f64 * (self.n as f64).powi(3)
    }
}

/// Recorded operation counts for steps 3 to 6.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCosts {
    /// Vertices written or visited while adding and deleting branches.
    pub step3: u64,
    /// Multiply-adds spent on extended reduced matrix entries.
    pub step4: u64,
    /// `ℓ s′³`.
    pub step5: u64,
    /// `Σ_j j |S′_{j−1}| (|S′_j| − |S′_{j−1}|)`.
    pub step6: u64,
}

impl StepCosts {
    pub fn total(&self) -> u64 {
        self.step3 + self.step4 + self.step5 + self.step6
    }
}

/// Upper estimates for each step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    /// `p (k+1) m`, shared by steps 3 and 4.
    pub branch_updates: f64,
    /// `ℓ s³`.
    pub reduced_iteration: f64,
    /// `(k + p) N² / 2`.
    pub lift: f64,
}

impl CostBounds {
    pub fn from_measurements(meas: &Measurements) -> Self {
        let (n, s, k, m, p, ell) = (
            meas.n as f64,
            meas.s as f64,
            meas.k as f64,
            meas.m as f64,
            meas.p as f64,
            meas.ell as f64,
        );
        Self {
            branch_updates: p * (k + 1.0) * m,
            reduced_iteration: ell * s.powi(3),
            lift: (k + p) * n * n / 2.0,
        }
    }

    pub fn total(&self) -> f64 {
        2.0 * self.branch_updates + self.reduced_iteration + self.lift
    }

    /// `1 − total / (ℓ N³)`.
    pub fn savings(&self, meas: &Measurements) -> f64 {
        1.0 - self.total() / meas.baseline()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithinBounds {
    pub step3: bool,
    pub step4: bool,
    pub step5: bool,
    pub step6: bool,
    /// Step 6 against `k′ N′² / 2`, the simplex bound for the depth actually reached.
    pub step6_lemma: bool,
}

impl WithinBounds {
    pub fn all(&self) -> bool {
        self.step3 && self.step4 && self.step5 && self.step6 && self.step6_lemma
    }
}

/// Itemised cost of one update session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub before: Measurements,
    pub after: Measurements,
    pub costs: StepCosts,
    /// Bounds evaluated with `N = N′`, `s = s′` and `k`, `m` the larger of
    /// their values before and after the update.
    pub bounds: CostBounds,
    pub within: WithinBounds,
    /// `ℓ N′³`.
    pub baseline: f64,
    /// `1 − (step3 + step4 + step5 + step6) / baseline`.
    pub savings: f64,
    /// Savings implied by the bounds instead of the recorded counts.
    pub bound_savings: f64,
    pub meas_before: MeasConditions,
    pub meas_after: MeasConditions,
    /// Matrix entries written in step 1 (not part of the savings).
    pub step1_entries: u64,
    /// Structural-set checks made in step 2 (not part of the savings).
    pub step2_checks: u64,
}

impl CostReport {
    pub fn new(
        before: Measurements,
        after: Measurements,
        costs: StepCosts,
        step1_entries: u64,
        step2_checks: u64,
        ratio: f64,
    ) -> Self {
        let combined = Measurements {
            n: after.n,
            s: after.s,
            k: before.k.max(after.k),
            m: before.m.max(after.m),
            ell: after.ell,
            p: after.p,
        };
        let bounds = CostBounds::from_measurements(&combined);
        let n_after = after.n as f64;
        let within = WithinBounds {
            step3: costs.step3 as f64 <= bounds.branch_updates,
            step4: costs.step4 as f64 <= bounds.branch_updates,
            step5: costs.step5 as f64 <= bounds.reduced_iteration,
            step6: costs.step6 as f64 <= bounds.lift,
            step6_lemma: costs.step6 as f64 <= after.k as f64 * n_after * n_after / 2.0,
        };
        let baseline = after.baseline();
        Self {
            before,
            after,
            costs,
            bounds,
            within,
            baseline,
            savings: 1.0 - costs.total() as f64 / baseline,
            bound_savings: bounds.savings(&combined),
            meas_before: before.meas_conditions(ratio),
            meas_after: after.meas_conditions(ratio),
            step1_entries,
            step2_checks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let b = &self.before;
        let a = &self.after;
        writeln!(out, "{:<14}{:>12}{:>12}", "measurement", "before", "after").unwrap();
        for (name, x, y) in [
            ("N", b.n, a.n),
            ("s", b.s, a.s),
            ("k", b.k, a.k),
            ("m", b.m, a.m),
            ("ell", b.ell, a.ell),
            ("p", b.p, a.p),
        ] {
            writeln!(out, "{name:<14}{x:>12}{y:>12}").unwrap();
        }
        writeln!(out).unwrap();
        writeln!(
            out,
            "{:<14}{:>12}{:>14}{:>8}",
            "step", "cost", "bound", "ok"
        )
        .unwrap();
        let rows = [
            (
                "3 branches",
                self.costs.step3,
                self.bounds.branch_updates,
                self.within.step3,
            ),
            (
                "4 matrix",
                self.costs.step4,
                self.bounds.branch_updates,
                self.within.step4,
            ),
            (
                "5 reduced",
                self.costs.step5,
                self.bounds.reduced_iteration,
                self.within.step5,
            ),
            (
                "6 lift",
                self.costs.step6,
                self.bounds.lift,
                self.within.step6,
            ),
        ];
        for (name, cost, bound, ok) in rows {
            writeln!(
                out,
                "{name:<14}{cost:>12}{bound:>14.0}{:>8}",
                if ok { "yes" } else { "NO" }
            )
            .unwrap();
        }
        writeln!(out, "{:<14}{:>12}", "total", self.costs.total()).unwrap();
        writeln!(out, "{:<14}{:>12.0}", "baseline", self.baseline).unwrap();
        writeln!(out, "{:<14}{:>11.2}%", "savings", 100.0 * self.savings).unwrap();
        writeln!(
            out,
            "{:<14}{:>11.2}%",
            "bound savings",
            100.0 * self.bound_savings
        )
        .unwrap();
        writeln!(
            out,
            "{:<14}{:>12}",
            "meas (before)",
            if self.meas_before.all() {
                "holds"
            } else {
                "fails"
            }
        )
        .unwrap();
        out
    }
}

/// `Σ_{j=1}^{k} j · x_{j−1} · (x_j − x_{j−1})` for cumulative level sizes
/// `x_j = |S_j|`.
pub fn lift_cost(cumulative: &[usize]) -> u64 {
    cumulative
        .windows(2)
        .enumerate()
        .map(|(idx, w)| ((idx + 1) * w[0] * (w[1] - w[0])) as u64)
        .sum()
}

/// For `0 ≤ x_0 ≤ … ≤ x_m = N` returns `F(x) = Σ_{i=1}^{m} x_{i−1}(x_i − x_{i−1})`
/// together with the bound `m N² / (2 (m + 1))`.
pub fn simplex_bound(x: &[f64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::invalid(
            "simplex point needs at least two coordinates",
        ));
    }
    if x.iter().any(|v| !v.is_finite()) || x[0] < 0.0 {
        return Err(Error::invalid(
            "simplex coordinates must be finite and non-negative",
        ));
    }
    if x.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("simplex coordinates must be non-decreasing"));
    }
    let m = (x.len() - 1) as f64;
    let n = x[x.len() - 1];
    let f = x.windows(2).map(|w| w[0] * (w[1] - w[0])).sum();
    Ok((f, m * n * n / (2.0 * (m + 1.0))))
}
