//! Globally adaptive Simpson quadrature of functions given in log form.
//!
//! Integrands are supplied as `ln f`, so densities spanning hundreds of orders of
//! magnitude are integrated as `exp(ln f - ref)` and rescaled at the end.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{param, QuadratureError, Result};
use crate::logspace::Neumaier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    /// Absolute error floor in units of the integrand's peak value.
    pub abs_floor: f64,
    pub max_depth: u32,
    /// Extra mantissa values (in `[1, b)`) at which every period is split.
    pub hints: Vec<f64>,
    pub max_evals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_floor: 1e-300,
            max_depth: 50,
            hints: Vec::new(),
            max_evals: 4_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadratureSpec {
            rel_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return param(format!("rel_tol must lie in (0, 1e-3], got {}", self.rel_tol));
        }
        if self.max_depth > 60 {
            return param(format!("max_depth must be <= 60, got {}", self.max_depth));
        }
        if !(self.abs_floor >= 0.0) {
            return param("abs_floor must be >= 0");
        }
        Ok(())
    }

    /// Tolerance for integrals nested inside an outer quadrature.
    pub fn inner(&self) -> QuadratureSpec {
        QuadratureSpec {
            rel_tol: (self.rel_tol * 1e-1).max(1e-12),
            ..self.clone()
        }
    }
}

/// Rescale threshold: integrand values above `ref + RESCALE` restart the sum.
const RESCALE: f64 = 600.0;

struct Cell {
    a: f64,
    b: f64,
    // exp(ln f - ref) at a, a+h/4, mid, a+3h/4, b
    f: [f64; 5],
    est: f64,
    err: f64,
    depth: u32,
}

impl Cell {
    fn from_samples(a: f64, b: f64, f: [f64; 5], depth: u32) -> Cell {
        let h = b - a;
        let coarse = h / 6.0 * (f[0] + 4.0 * f[2] + f[4]);
        let fine = h / 12.0 * (f[0] + 4.0 * f[1] + 2.0 * f[2] + 4.0 * f[3] + f[4]);
        Cell {
            a,
            b,
            f,
            est: fine + (fine - coarse) / 15.0,
            err: (fine - coarse).abs() / 15.0,
            depth,
        }
    }
}

struct Keyed(f64, usize);

impl PartialEq for Keyed {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Keyed {}
impl PartialOrd for Keyed {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Keyed {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then_with(|| o.1.cmp(&self.1))
    }
}

/// Sample sites of a break-delimited cell. The ends are pulled one ulp inward so
/// that jumps sitting exactly on a break contribute their one-sided limits.
fn initial_sites(a: f64, b: f64) -> [f64; 5] {
    let h = b - a;
    let (ia, ib) = (a.next_up(), b.next_down());
    let (a, b) = if ia < ib { (ia, ib) } else { (a, b) };
    [a, a + 0.25 * h, a + 0.5 * h, a + 0.75 * h, b]
}

/// `ln \int_lo^hi exp(log_f(t)) dt` with forced splits at `breaks`.
///
/// Returns `-inf` for an empty range or an identically vanishing integrand.
pub fn integrate_log<F>(log_f: F, lo: f64, hi: f64, breaks: &[f64], spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo < hi) {
        return Ok(f64::NEG_INFINITY);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return param(format!("integration limits must be finite, got [{lo}, {hi}]"));
    }
    let mut pts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    pts.push(lo);
    pts.extend(breaks.iter().copied().filter(|&p| p > lo && p < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|b, a| *b - *a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()));
    if pts.len() < 2 {
        return Ok(f64::NEG_INFINITY);
    }
    if *pts.last().unwrap() < hi {
        *pts.last_mut().unwrap() = hi;
    }

    let mut evals = 0usize;
    let mut logs: Vec<[f64; 5]> = Vec::with_capacity(pts.len() - 1);
    let mut reference = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let s = initial_sites(a, b).map(&log_f);
        evals += 5;
        for v in s {
            if v > reference {
                reference = v;
            }
        }
        logs.push(s);
    }
    if reference == f64::INFINITY || reference.is_nan() {
        return param("integrand is not finite");
    }

    'restart: loop {
        let mut cells: Vec<Cell> = pts
            .windows(2)
            .zip(&logs)
            .map(|(w, s)| Cell::from_samples(w[0], w[1], s.map(|v| (v - reference).exp()), 0))
            .collect();
        if reference == f64::NEG_INFINITY {
            // Nothing seen yet: probe interior points before declaring the integral zero.
            let mut any = f64::NEG_INFINITY;
            for c in &cells {
                for k in 1..16 {
                    let t = c.a + (c.b - c.a) * k as f64 / 16.0;
                    any = any.max(log_f(t));
                }
            }
            evals += cells.len() * 15;
            if any == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            reference = any;
            continue 'restart;
        }
        let mut heap: BinaryHeap<Keyed> = cells.iter().enumerate().map(|(i, c)| Keyed(c.err, i)).collect();
        let mut run_est: f64 = cells.iter().map(|c| c.est).sum();
        let mut run_err: f64 = cells.iter().map(|c| c.err).sum();
        loop {
            let floor = spec.abs_floor;
            if run_err <= (spec.rel_tol * run_est.abs()).max(floor) || heap.is_empty() || evals >= spec.max_evals {
                // Final accounting in interval order with compensation.
                let mut order: Vec<usize> = (0..cells.len()).collect();
                order.sort_by(|&i, &j| cells[i].a.total_cmp(&cells[j].a));
                let mut total = Neumaier::default();
                let mut err = 0.0;
                for &i in &order {
                    total.add(cells[i].est);
                    err += cells[i].err;
                }
                let total = total.total();
                let budget = (spec.rel_tol * total.abs()).max(floor);
                if err <= budget {
                    return Ok(if total > 0.0 {
                        total.ln() + reference
                    } else {
                        f64::NEG_INFINITY
                    });
                }
                if heap.is_empty() || evals >= spec.max_evals {
                    return Err(QuadratureError {
                        log_partial: total.max(0.0).ln() + reference,
                        log_bound: err.ln() + reference,
                        evals,
                    }
                    .into());
                }
                run_est = total;
                run_err = err;
            }
            let Keyed(_, idx) = heap.pop().expect("non-empty heap");
            if cells[idx].depth >= spec.max_depth {
                // Leave the cell in place; its error stays in the budget.
                continue;
            }
            let c = &cells[idx];
            let (a, b, m) = (c.a, c.b, 0.5 * (c.a + c.b));
            let l1 = log_f(a + 0.125 * (b - a));
            let l3 = log_f(a + 0.375 * (b - a));
            let r1 = log_f(a + 0.625 * (b - a));
            let r3 = log_f(a + 0.875 * (b - a));
            evals += 4;
            let peak = l1.max(l3).max(r1).max(r3);
            if peak > reference + RESCALE {
                // Resample everything at the new scale; the sample cache is small.
                reference = peak;
                logs = pts.windows(2).map(|w| initial_sites(w[0], w[1]).map(&log_f)).collect();
                continue 'restart;
            }
            let depth = c.depth + 1;
            let f = c.f;
            let e = |v: f64| (v - reference).exp();
            let left = Cell::from_samples(a, m, [f[0], e(l1), f[1], e(l3), f[2]], depth);
            let right = Cell::from_samples(m, b, [f[2], e(r1), f[3], e(r3), f[4]], depth);
            run_est += left.est + right.est - cells[idx].est;
            run_err += left.err + right.err - cells[idx].err;
            cells[idx] = left;
            heap.push(Keyed(cells[idx].err, idx));
            cells.push(right);
            heap.push(Keyed(cells[cells.len() - 1].err, cells.len() - 1));
        }
    }
}
