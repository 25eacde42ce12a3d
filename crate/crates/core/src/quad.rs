//! Composite Simpson quadrature used by the catalog and the realizer.

use crate::{Error, Result};

/// Largest node count the adaptive loop will try before giving up.
const MAX_ADAPTIVE_NODES: usize = (1 << 21) + 1;

/// Composite Simpson rule on `[lo, hi]` with an odd number of nodes.
#[cfg(test)]
pub(crate) fn simpson<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, nodes: usize) -> f64 {
    debug_assert!(nodes >= 3 && nodes % 2 == 1, "Simpson needs an odd node count >= 3");
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..nodes - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + h * i as f64);
    }
    acc * h / 3.0
}

/// Simpson weights for an odd-length uniform grid; the caller multiplies by
/// pointwise integrand values.
pub(crate) fn simpson_grid(lo: f64, hi: f64, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(nodes >= 3 && nodes % 2 == 1);
    let h = (hi - lo) / (nodes - 1) as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| lo + h * i as f64).collect();
    let ws: Vec<f64> = (0..nodes)
        .map(|i| {
            let w = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect();
    (xs, ws)
}

/// Power moments `m_0 .. m_order` of `pdf` over `[lo, hi]` by composite
/// Simpson, doubling the grid until two successive refinements agree to
/// `rel_tol` relative (with an absolute floor of 1 so near-zero odd moments
/// converge too).
pub(crate) fn adaptive_power_moments(
    pdf: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    order: usize,
    rel_tol: f64,
) -> Result<Vec<f64>> {
    let mut nodes = 513;
    let mut prev: Option<Vec<f64>> = None;
    while nodes <= MAX_ADAPTIVE_NODES {
        let cur = power_moments_fixed(pdf, lo, hi, order, nodes);
        if let Some(p) = &prev {
            let converged = cur
                .iter()
                .zip(p)
                .all(|(c, p)| (c - p).abs() <= rel_tol * c.abs().max(1.0));
            if converged {
                return Ok(cur);
            }
        }
        prev = Some(cur);
        nodes = 2 * (nodes - 1) + 1;
    }
    Err(Error::Numerical(format!(
        "moment quadrature did not converge on [{lo}, {hi}] up to order {order} \
         (last grid {MAX_ADAPTIVE_NODES} nodes)"
    )))
}

/// Single-pass Simpson evaluation of all power moments up to `order`.
fn power_moments_fixed(
    pdf: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    order: usize,
    nodes: usize,
) -> Vec<f64> {
    let h = (hi - lo) / (nodes - 1) as f64;
    let mut acc = vec![0.0; order + 1];
    for i in 0..nodes {
        let x = lo + h * i as f64;
        let w = if i == 0 || i == nodes - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = w * pdf(x);
        let mut xp = 1.0;
        for m in acc.iter_mut() {
            *m += p * xp;
            xp *= x;
        }
    }
    for m in acc.iter_mut() {
        *m *= h / 3.0;
    }
    acc
}
