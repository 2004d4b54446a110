//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol * |value|)` or `max_pieces` subintervals are in use.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        };
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Piece {
        a,
        b,
        value: v,
        err: e,
    });
    let mut total = v;
    let mut total_err = e;
    while total_err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_pieces {
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod(&mut f, worst.a, m);
        let (v2, e2) = kronrod(&mut f, m, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: m,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: m,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let abs_error = heap.iter().map(|p| p.err).sum();
    Quadrature {
        value,
        abs_error,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-14, 1e-14, 50);
        assert!((q.value - (64.0 / 6.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let q = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 1e-10, 200);
        assert!((q.value - 2.0).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn oscillatory() {
        let q = integrate(
            |x| (10.0 * x).sin(),
            0.0,
            std::f64::consts::PI,
            1e-13,
            1e-13,
            200,
        );
        assert!(q.value.abs() < 1e-12);
    }
}
