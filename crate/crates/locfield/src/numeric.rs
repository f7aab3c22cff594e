//! Scalar numerical primitives: adaptive quadrature, Gauss-Hermite rules,
//! a bounded 1-D maximizer, the inverse normal CDF, and grid interpolation.
//!
//! These are deliberately self-contained. The identity checks that ship in
//! the `selftest` command (and the oracles in the test suite) must not
//! depend on the code they are checking, so the quadrature routines here
//! know nothing about covariance models or likelihoods.

use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// Classic bisection scheme with Richardson correction: a subinterval is
/// accepted when the two-panel refinement moves the estimate by less than
/// `15 * tol`. `max_depth` bounds the recursion; exceeding it returns an
/// error rather than a silently inaccurate value.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::NoConvergence("adaptive Simpson quadrature"));
        }
        Ok(rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }

    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical("non-finite quadrature bounds".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    rec(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

/// Adaptive Simpson over `[a, b]` pre-split into `chunks` equal pieces.
///
/// Useful for oscillatory integrands where a single top-level Simpson
/// estimate is useless and would push the recursion unnecessarily deep.
pub fn adaptive_simpson_chunked<F>(
    f: F,
    a: f64,
    b: f64,
    chunks: usize,
    tol: f64,
    max_depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let n = chunks.max(1);
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == n { b } else { lo + h };
        total += adaptive_simpson(&f, lo, hi, tol / n as f64, max_depth)?;
    }
    Ok(total)
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for
/// `integral of exp(-x^2) g(x) dx ~= sum_i w_i g(x_i)`.
///
/// Newton iteration on the orthonormal Hermite recurrence; exact for
/// polynomials of degree `2n - 1`, which is what makes it the right oracle
/// for kernel moment conditions (polynomial times Gaussian).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const EPS: f64 = 3e-14;
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    const MAXIT: usize = 40;

    if n == 0 || n > 128 {
        return Err(Error::OutOfDomain {
            what: "Gauss-Hermite order",
            value: n as f64,
            lo: 1.0,
            hi: 128.0,
        });
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => {
                let t = (2 * n + 1) as f64;
                t.sqrt() - 1.85575 * t.powf(-1.0 / 6.0)
            }
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..MAXIT {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / j as f64).sqrt() * p2
                    - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= EPS {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence("Gauss-Hermite node iteration"));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // Largest nodes first came out of the iteration; report ascending.
    x.reverse();
    w.reverse();
    Ok((x, w))
}

/// Maximize `f` over `[lo, hi]` to absolute tolerance `tol` on the argument.
///
/// Brent's method (golden-section bracketing refined with parabolic steps)
/// on `-f`, followed by an explicit comparison against both endpoints, which
/// the interior iteration never evaluates. Ties are resolved toward the
/// smaller argument so results are deterministic on flat objectives.
pub fn brent_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    const GOLD: f64 = 0.381_966_011_250_105_1; // (3 - sqrt(5)) / 2
    const ITMAX: usize = 200;

    if !(lo < hi) {
        return Err(Error::Numerical(format!(
            "invalid bracket [{lo}, {hi}] for scalar maximization"
        )));
    }
    let g = |x: f64| -f(x);
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = g(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d = 0.0f64;
    let mut e = 0.0f64;

    for _ in 0..ITMAX {
        let m = 0.5 * (a + b);
        let tol1 = tol.max(f64::EPSILON * x.abs());
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // Trial parabolic fit through (x, w, v).
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m - x >= 0.0 { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d >= 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = g(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    // Endpoints, then the interior optimum; first strict improvement wins,
    // so exact ties go to the smallest argument.
    let mut best = (lo, -g(lo));
    for cand in [(hi, -g(hi)), (x, -fx)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Numerical(
            "objective non-finite at maximizer".into(),
        ));
    }
    Ok(best)
}

/// Inverse of the standard normal CDF (quantile function).
///
/// Wichura's algorithm AS 241, the PPND16 variant: three rational
/// approximations covering the central region and both tails, accurate to
/// about 1e-16 relative. The coefficients are fixed constants of the
/// published algorithm; having it pinned here (rather than behind a
/// dependency) is what keeps simulated draws reproducible at the
/// specification level.
///
/// Requires `0 <= p <= 1`; returns `-inf`/`inf` at the endpoints.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "quantile argument {p} outside [0,1]");
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545_5e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `x`, with constant
/// extrapolation outside the grid. `xs` must be strictly increasing.
pub fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = match xs.binary_search_by(|v| v.partial_cmp(&x).expect("finite grid")) {
        Ok(j) => return ys[j],
        Err(j) => j,
    };
    let t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    ys[j - 1] + t * (ys[j] - ys[j - 1])
}

/// Bilinear interpolation on a tensor grid. `values` is row-major over
/// `(xs, ys)`: `values[i * ys.len() + j]` is the value at `(xs[i], ys[j])`.
/// Constant extrapolation outside the grid.
pub fn interp_bilinear(xs: &[f64], ys: &[f64], values: &[f64], x: f64, y: f64) -> f64 {
    debug_assert_eq!(values.len(), xs.len() * ys.len());
    let cell = |grid: &[f64], v: f64| -> (usize, f64) {
        if v <= grid[0] {
            return (0, 0.0);
        }
        if v >= grid[grid.len() - 1] {
            return (grid.len() - 2, 1.0);
        }
        let j = match grid.binary_search_by(|g| g.partial_cmp(&v).expect("finite grid")) {
            Ok(j) => return (j.min(grid.len() - 2), if j == grid.len() - 1 { 1.0 } else { 0.0 }),
            Err(j) => j,
        };
        (j - 1, (v - grid[j - 1]) / (grid[j] - grid[j - 1]))
    };
    let (i, tx) = cell(xs, x);
    let (j, ty) = cell(ys, y);
    let ny = ys.len();
    let v00 = values[i * ny + j];
    let v01 = values[i * ny + j + 1];
    let v10 = values[(i + 1) * ny + j];
    let v11 = values[(i + 1) * ny + j + 1];
    v00 * (1.0 - tx) * (1.0 - ty)
        + v10 * tx * (1.0 - ty)
        + v01 * (1.0 - tx) * ty
        + v11 * tx * ty
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) || !hi.is_finite() {
        return Err(Error::Config(format!(
            "log grid needs 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if n < 2 {
        return Err(Error::Config("log grid needs at least 2 points".into()));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            // Pin the endpoints so round-tripping through exp is exact there.
            match i {
                0 => lo,
                i if i == n - 1 => hi,
                i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
            }
        })
        .collect())
}
