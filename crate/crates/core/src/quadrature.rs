//! Gauss–Legendre panels on a radial grid and an adaptive Gauss–Kronrod
//! integrator.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

pub const PANEL_POINTS: usize = 16;
const TAIL_PANEL: f64 = 0.25;

/// Composite Gauss–Legendre nodes on `[0, r_max]` with a breakpoint.
///
/// Functions discontinuous at the breakpoint are integrated exactly as
/// piecewise-smooth functions: nodes with index `< split` lie inside.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub breakpoint: f64,
    pub split: usize,
    pub r_max: f64,
}

impl RadialGrid {
    pub fn new(breakpoint: f64, r_max: f64) -> Result<Self> {
        if !(breakpoint > 0.0) || !(r_max > breakpoint) {
            return Err(Error::Domain(format!(
                "radial grid needs 0 < breakpoint < r_max, got {breakpoint}, {r_max}"
            )));
        }
        let mut edges = vec![0.0, 0.5 * breakpoint, breakpoint];
        let mut r = breakpoint;
        let mut width = breakpoint;
        while r < r_max {
            let w = width.min(TAIL_PANEL);
            r = (r + w).min(r_max);
            edges.push(r);
            width *= 2.0;
        }
        let (gx, gw) = gauss_legendre(PANEL_POINTS);
        let mut nodes = Vec::with_capacity(edges.len() * PANEL_POINTS);
        let mut weights = Vec::with_capacity(nodes.capacity());
        let mut split = 0;
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for k in 0..PANEL_POINTS {
                nodes.push(mid + half * gx[k]);
                weights.push(half * gw[k]);
            }
            if b <= breakpoint {
                split = nodes.len();
            }
        }
        Ok(Self {
            nodes,
            weights,
            breakpoint,
            split,
            r_max,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i r_i^2 a_i b_i`, the overlap with measure `r^2 dr`.
    pub fn overlap(&self, a: &[f64], b: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(a.iter().zip(b))
            .map(|((r, w), (x, y))| w * r * r * x * y)
            .sum()
    }

    /// `sum_i w_i f(r_i)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

const GK_XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let x = h * GK_XK[j];
        let s = f(c - x) + f(c + x);
        kron += GK_WK[j] * s;
        if j % 2 == 1 {
            gauss += GK_WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive G7K15 on `[a, b]` to absolute tolerance `tol`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    let mut intervals = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..2000 {
        let (total, err) = intervals
            .iter()
            .fold((0.0, 0.0), |(s, e), iv| (s + iv.2 .0, e + iv.2 .1));
        if err <= tol {
            return Ok((total, err));
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.partial_cmp(&y.1 .2 .1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        intervals.push((lo, mid, gk15(&f, lo, mid)));
        intervals.push((mid, hi, gk15(&f, mid, hi)));
    }
    Err(Error::NonConvergence(format!(
        "adaptive quadrature on [{a}, {b}] missed tolerance {tol}"
    )))
}
