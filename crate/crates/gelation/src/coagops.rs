//! Coagulation operators on a log grid.
//!
//! Everything is built on one bilinear form. For a kernel `k(x)k(y)` write
//! `U = k·u`, `V = k·v` and
//!
//! `B(u,v)(x) = ∫₀^{x/2} [U(x-y) - U(x)] V(y) dy - U(x) ∫_{x/2}^∞ V(y) dy`.
//!
//! Then `Q[f] = B(f,f)`, `𝓛_{f₀}[h] = B(f₀,h) + B(h,f₀)` and the linearisation
//! about `x^{-(3+λ)/2}` is `B(G,h) + B(h,G)` with `G` kept analytic.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Field, LogGrid};
use crate::quadrature::{gregory_weights, lagrange4, linear_fit, reverse_cumulative, solve_dense};
use crate::real::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel<F> {
    /// `(xy)^{λ/2}`
    Power { lambda: F },
    /// `c`
    Constant { c: F },
    /// `xy`
    Multiplicative,
}

impl<F: Real> Kernel<F> {
    /// Factor `k(x)` with `K(x,y) = k(x)k(y)`.
    #[inline]
    pub fn factor(&self, x: F) -> F {
        match *self {
            Kernel::Power { lambda } => x.powf(lambda / lit(2.0)),
            Kernel::Constant { c } => c.sqrt(),
            Kernel::Multiplicative => x,
        }
    }

    pub fn eval(&self, x: F, y: F) -> F {
        self.factor(x) * self.factor(y)
    }

    /// Weight exponent that makes `k·f` smooth in `ln x` for the expected data.
    fn interp_exponent(&self) -> F {
        match self {
            Kernel::Power { .. } => lit(1.5),
            _ => F::zero(),
        }
    }

    /// Fixed exponent of `k·f` beyond the box, `-3/2` for `f ~ x^{-(3+λ)/2}`.
    fn tail_exponent(&self) -> Option<F> {
        match self {
            Kernel::Power { .. } => Some(lit(-1.5)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Minimum grid nodes per decade.
    pub panels_per_decade: usize,
    /// Fraction `s` of `x` below which the bracket is formed; `0 < s ≤ 1/2`.
    pub singularity_split: f64,
    /// Polynomial degree of the small-`y` closure.
    pub small_y_order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { panels_per_decade: 32, singularity_split: 0.5, small_y_order: 6 }
    }
}

/// `amp · x^exp`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw<F> {
    pub amp: F,
    pub exp: F,
}

impl<F: Real> PowerLaw<F> {
    pub fn zero() -> Self {
        PowerLaw { amp: F::zero(), exp: F::zero() }
    }
    #[inline]
    pub fn eval(&self, x: F) -> F {
        if self.amp == F::zero() {
            F::zero()
        } else {
            self.amp * x.powf(self.exp)
        }
    }
}

fn fit_power<F: Real>(x: &[F], v: &[F]) -> Option<PowerLaw<F>> {
    let s0 = v[0].signum();
    if v.iter().any(|&t| t == F::zero() || t.signum() != s0) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|&t| to_f64(t).ln()).collect();
    let ly: Vec<f64> = v.iter().map(|&t| to_f64(t.abs()).ln()).collect();
    let (a, b) = linear_fit(&lx, &ly);
    Some(PowerLaw { amp: s0 * lit(a.exp()), exp: lit(b) })
}

/// Power law continuing the first samples towards `x → 0`.
pub fn fit_low<F: Real>(x: &[F], v: &[F]) -> PowerLaw<F> {
    let m = x.len().min(8);
    if v[..m].iter().all(|t| *t == F::zero()) {
        return PowerLaw::zero();
    }
    fit_power(&x[..m], &v[..m]).unwrap_or(PowerLaw { amp: v[0], exp: F::zero() })
}

/// Power law continuing the last decade of samples towards `x → ∞`.
///
/// With `fixed_exp` only the amplitude is fitted (least squares), so the
/// closure is linear in the samples; otherwise amplitude and exponent are fitted.
pub fn fit_high<F: Real>(x: &[F], v: &[F], fixed_exp: Option<F>) -> PowerLaw<F> {
    let n = x.len();
    let cut = x[n - 1] / lit(10.0);
    let start = x.partition_point(|&t| t < cut).min(n.saturating_sub(4));
    let (xs, vs) = (&x[start..], &v[start..]);
    if vs.iter().all(|t| *t == F::zero()) {
        return PowerLaw::zero();
    }
    match fixed_exp {
        Some(e) => {
            let (mut num, mut den) = (F::zero(), F::zero());
            for (&xi, &vi) in xs.iter().zip(vs) {
                let b = xi.powf(e);
                num = num + b * vi;
                den = den + b * b;
            }
            PowerLaw { amp: num / den, exp: e }
        }
        None => fit_power(xs, vs).unwrap_or_else(PowerLaw::zero),
    }
}

const PAD: usize = 3;

/// Samples on an equispaced `ln x` grid, interpolated as `x^{-p}·cubic(x^p·u)`,
/// with power laws beyond both ends.
#[derive(Debug, Clone)]
pub struct Profile<F> {
    s0: F,
    h: F,
    n: usize,
    ps: F,
    phi: Vec<F>,
    pub lo: PowerLaw<F>,
    pub hi: PowerLaw<F>,
}

impl<F: Real> Profile<F> {
    pub fn new(s0: F, h: F, values: &[F], ps: F, fixed_exp: Option<F>) -> Self {
        let n = values.len();
        let xs: Vec<F> = (0..n).map(|i| (s0 + h * lit(i as f64)).exp()).collect();
        let lo = fit_low(&xs, values);
        let hi = fit_high(&xs, values, fixed_exp);
        let mut phi = vec![F::zero(); n + 2 * PAD];
        for k in 1..=PAD {
            let x = (s0 - h * lit(k as f64)).exp();
            phi[PAD - k] = x.powf(ps) * lo.eval(x);
            let x = (s0 + h * lit((n - 1 + k) as f64)).exp();
            phi[PAD + n - 1 + k] = x.powf(ps) * hi.eval(x);
        }
        for i in 0..n {
            phi[PAD + i] = xs[i].powf(ps) * values[i];
        }
        Profile { s0, h, n, ps, phi, lo, hi }
    }

    /// Value at an arbitrary `x > 0`.
    pub fn at(&self, x: F) -> F {
        let t = (x.ln() - self.s0) / self.h;
        let two: F = lit(2.0);
        if t < -two {
            return self.lo.eval(x);
        }
        if t >= lit((self.n + 1) as f64) {
            return self.hi.eval(x);
        }
        let base = t.floor();
        let w = lagrange4(t - base);
        let b = base.to_isize().unwrap() + PAD as isize - 1;
        let b = b as usize;
        let p = &self.phi[b..b + 4];
        x.powf(-self.ps) * (w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + w[3] * p[3])
    }

    #[inline(always)]
    fn phi_at(&self, i: usize) -> F {
        self.phi[PAD + i]
    }
}

/// Either a sampled profile or an exact power law.
#[derive(Debug, Clone)]
pub enum Prof<F> {
    Sampled(Profile<F>),
    Exact(PowerLaw<F>),
}

impl<F: Real> Prof<F> {
    fn at(&self, x: F) -> F {
        match self {
            Prof::Sampled(p) => p.at(x),
            Prof::Exact(p) => p.eval(x),
        }
    }
    fn lo(&self) -> PowerLaw<F> {
        match self {
            Prof::Sampled(p) => p.lo,
            Prof::Exact(p) => *p,
        }
    }
}

/// Moment `∫ x^k f dx` with the power-law closures reported separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport<F> {
    pub value: F,
    pub low_closure: F,
    pub high_closure: F,
    /// A closure integral diverges for the fitted end exponent; it was dropped from `value`.
    pub divergent: bool,
}

pub fn moment<F: Real>(f: &Field<F>, k: F) -> MomentReport<F> {
    let x = f.nodes();
    let n = x.len();
    let h = f.grid.log_step();
    let integrand: Vec<F> = x.iter().zip(&f.values).map(|(&x, &v)| x.powf(k + F::one()) * v).collect();
    let body = crate::quadrature::gregory_sum(&integrand, h);
    let lo = fit_low(x, &f.values);
    let hi = fit_high(x, &f.values, None);
    let mut divergent = false;
    let mut low_closure = F::zero();
    if lo.amp != F::zero() {
        let e = lo.exp + k + F::one();
        if e > F::zero() {
            low_closure = lo.amp * x[0].powf(e) / e;
        } else {
            divergent = true;
        }
    }
    let mut high_closure = F::zero();
    if hi.amp != F::zero() {
        let e = hi.exp + k + F::one();
        if e < F::zero() {
            high_closure = -hi.amp * x[n - 1].powf(e) / e;
        } else {
            divergent = true;
        }
    }
    MomentReport { value: body + low_closure + high_closure, low_closure, high_closure, divergent }
}

/// Values of the second argument on the half grid `z_j = x_j / 2`.
struct VSide<F> {
    /// `V(z_j) z_j h`
    vh: Vec<F>,
    /// `∫_{z_j}^∞ V`
    tail: Vec<F>,
    lo: PowerLaw<F>,
}

/// Operator tables for one grid and kernel.
#[derive(Debug)]
pub struct CoagOps<F> {
    grid: Arc<LogGrid<F>>,
    kernel: Kernel<F>,
    spec: QuadratureSpec,
    n: usize,
    h: F,
    s0: F,
    ps: F,
    kfac: Vec<F>,
    /// `x_i^{-ps}`
    xinv: Vec<F>,
    /// half grid, extended up to `x_max`
    z: Vec<F>,
    /// stencil base offset for `x_i (1 - e^{-kh}/2)`
    off: Vec<isize>,
    wts: Vec<[F; 4]>,
    /// `ln(1 - e^{-kh}/2)`
    lnq: Vec<F>,
    /// `(1 - e^{-kh}/2)^{-ps}`
    sc: Vec<F>,
    k_split: usize,
    cheb: Vec<F>,
    /// inverse Vandermonde on the Chebyshev points, `minv[m][l]`
    minv: Vec<Vec<f64>>,
}

impl<F: Real> CoagOps<F> {
    pub fn new(grid: Arc<LogGrid<F>>, kernel: Kernel<F>, spec: QuadratureSpec) -> Result<Self> {
        if spec.panels_per_decade < 4 {
            return Err(Error::param("quadrature.panels_per_decade", "must be at least 4"));
        }
        if !(spec.singularity_split > 0.0 && spec.singularity_split <= 0.5) {
            return Err(Error::param("quadrature.singularity_split", "must lie in (0, 1/2]"));
        }
        if !(1..=12).contains(&spec.small_y_order) {
            return Err(Error::param("quadrature.small_y_order", "must lie in 1..=12"));
        }
        if grid.density() < spec.panels_per_decade as f64 {
            return Err(Error::Underresolved(format!(
                "grid has {:.1} nodes per decade, quadrature asks for {}",
                grid.density(),
                spec.panels_per_decade
            )));
        }
        let n = grid.len();
        let h = grid.log_step();
        let hf = to_f64(h);
        let s0 = grid.x_min().ln();
        let ps = kernel.interp_exponent();
        let m2 = (std::f64::consts::LN_2 / hf).floor() as usize;
        let z: Vec<F> = (0..n + m2).map(|j| lit(to_f64(grid.x_min()) * (hf * j as f64).exp() / 2.0)).collect();
        let mut off = Vec::with_capacity(n);
        let mut wts = Vec::with_capacity(n);
        let mut lnq = Vec::with_capacity(n);
        let mut sc = Vec::with_capacity(n);
        for k in 0..n {
            let q = 1.0 - 0.5 * (-hf * k as f64).exp();
            let c = q.ln() / hf;
            let fl = c.floor();
            off.push(fl as isize);
            wts.push(lagrange4(lit::<F>(c - fl)));
            lnq.push(lit(q.ln()));
            sc.push(lit(q.powf(-to_f64(ps))));
        }
        let k_split = ((0.5 / spec.singularity_split).ln() / hf).round() as usize;
        let p = spec.small_y_order;
        let cheb_f: Vec<f64> = (1..=p)
            .map(|l| 0.5 * (1.0 - (std::f64::consts::PI * (2 * l - 1) as f64 / (2 * p) as f64).cos()))
            .collect();
        // columns of the inverse Vandermonde for monomials t^1..t^p
        let mut minv = vec![vec![0.0; p]; p];
        for l in 0..p {
            let a: Vec<Vec<f64>> = (0..p).map(|r| (1..=p).map(|m| cheb_f[r].powi(m as i32)).collect()).collect();
            let mut e = vec![0.0; p];
            e[l] = 1.0;
            let col = solve_dense(a, e).ok_or_else(|| Error::Underresolved("closure Vandermonde singular".into()))?;
            for m in 0..p {
                minv[m][l] = col[m];
            }
        }
        let kfac = grid.nodes().iter().map(|&x| kernel.factor(x)).collect();
        let xinv = grid.nodes().iter().map(|&x| x.powf(-ps)).collect();
        Ok(CoagOps {
            grid,
            kernel,
            spec,
            n,
            h,
            s0,
            ps,
            kfac,
            xinv,
            z,
            off,
            wts,
            lnq,
            sc,
            k_split,
            cheb: cheb_f.into_iter().map(lit).collect(),
            minv,
        })
    }

    pub fn grid(&self) -> &Arc<LogGrid<F>> {
        &self.grid
    }
    pub fn kernel(&self) -> Kernel<F> {
        self.kernel
    }
    pub fn spec(&self) -> QuadratureSpec {
        self.spec
    }

    fn check_field(&self, f: &Field<F>) -> Result<()> {
        if f.values.len() != self.n || (!Arc::ptr_eq(&f.grid, &self.grid) && *f.grid != *self.grid) {
            return Err(Error::Domain("field lives on a different grid".into()));
        }
        Ok(())
    }

    /// Sampled profile of arbitrary samples, with fitted power laws at both ends.
    fn profile(&self, values: &[F]) -> Profile<F> {
        Profile::new(self.s0, self.h, values, self.ps, None)
    }

    /// Profile of `k·f`; the high closure has the fixed exponent of the kernel, keeping it linear in `f`.
    fn kernel_profile(&self, f: &Field<F>) -> Profile<F> {
        let u: Vec<F> = f.values.iter().zip(&self.kfac).map(|(&a, &b)| a * b).collect();
        Profile::new(self.s0, self.h, &u, self.ps, self.kernel.tail_exponent())
    }

    fn vside(&self, v: &Prof<F>) -> Result<VSide<F>> {
        let nz = self.z.len();
        let vz: Vec<F> = self.z.iter().map(|&z| v.at(z)).collect();
        let vh: Vec<F> = vz.iter().zip(&self.z).map(|(&a, &z)| a * z * self.h).collect();
        let tail = match v {
            Prof::Exact(p) => {
                if p.amp != F::zero() && p.exp >= -F::one() {
                    return Err(Error::DivergentMoment(format!("tail of x^{} is not integrable", p.exp)));
                }
                self.z
                    .iter()
                    .map(|&z| if p.amp == F::zero() { F::zero() } else { -p.amp * z.powf(p.exp + F::one()) / (p.exp + F::one()) })
                    .collect()
            }
            Prof::Sampled(s) => {
                let hi = s.hi;
                let closure = if hi.amp == F::zero() {
                    F::zero()
                } else if hi.exp < -F::one() {
                    let zl = self.z[nz - 1];
                    -hi.amp * zl.powf(hi.exp + F::one()) / (hi.exp + F::one())
                } else {
                    return Err(Error::DivergentMoment(format!(
                        "far-field exponent {:.4} of the second argument is not below -1",
                        to_f64(hi.exp)
                    )));
                };
                let g: Vec<F> = vz.iter().zip(&self.z).map(|(&a, &z)| a * z).collect();
                reverse_cumulative(&g, self.h).into_iter().map(|t| t + closure).collect()
            }
        };
        Ok(VSide { vh, tail, lo: v.lo() })
    }

    /// Small-`y` closure weights `ω_l(α)` for `∫₀^{z₀} D(y) y^α dy ≈ z₀^{α+1} Σ ω_l D(t_l z₀)`.
    fn closure_weights(&self, alpha: F) -> Result<Vec<F>> {
        let a = to_f64(alpha);
        if a <= -2.0 {
            return Err(Error::DivergentMoment(format!("small-size exponent {a:.4} is not above -2")));
        }
        let p = self.cheb.len();
        Ok((0..p)
            .map(|l| lit((0..p).map(|m| self.minv[m][l] / ((m + 1) as f64 + a + 1.0)).sum::<f64>()))
            .collect())
    }

    /// Core evaluation. `with_tail = false` drops the `-U(x)∫_{x/2}^∞ V` term and the split.
    fn bform(&self, u: &Prof<F>, v: &Prof<F>, with_tail: bool, stage: &str) -> Result<Vec<F>> {
        let vs = self.vside(v)?;
        let n = self.n;
        let lo_v = vs.lo;
        let omega = if lo_v.amp != F::zero() { Some(self.closure_weights(lo_v.exp)?) } else { None };
        let z0 = self.z[0];
        let ksplit = if with_tail { self.k_split } else { 0 };
        let x = self.grid.nodes();
        let ulo = u.lo();
        // exact power-law U: (x q_k)^e = x^e q_k^e
        let qe: Vec<F> = match u {
            Prof::Exact(p) => self.lnq.iter().map(|&l| (p.exp * l).exp()).collect(),
            Prof::Sampled(_) => Vec::new(),
        };
        let node = |i: usize| -> F {
            let xi = x[i];
            let ui = match u {
                Prof::Sampled(p) => p.phi_at(i) * self.xinv[i],
                Prof::Exact(p) => p.eval(xi),
            };
            let ushift = |k: usize| -> F {
                match u {
                    Prof::Sampled(p) => {
                        let o = i as isize + self.off[k];
                        if o >= 1 - PAD as isize {
                            let b = (o - 1 + PAD as isize) as usize;
                            let w = &self.wts[k];
                            let ph = &p.phi[b..b + 4];
                            self.xinv[i] * self.sc[k] * (w[0] * ph[0] + w[1] * ph[1] + w[2] * ph[2] + w[3] * ph[3])
                        } else {
                            ulo.eval(xi * self.lnq[k].exp())
                        }
                    }
                    Prof::Exact(p) => {
                        if p.amp == F::zero() {
                            F::zero()
                        } else {
                            p.amp * xi.powf(p.exp) * qe[k]
                        }
                    }
                }
            };
            let jtop = i.saturating_sub(ksplit);
            // bracket over j in [0, jtop], i.e. k in [i - jtop, i]
            let kb = i - jtop;
            let cnt = jtop + 1;
            let mut acc = F::zero();
            if cnt >= 6 {
                for k in kb..=i {
                    acc = acc + (ushift(k) - ui) * vs.vh[i - k];
                }
                for (e, &g) in crate::quadrature::GREGORY_END.iter().enumerate() {
                    let c = lit::<F>(g - 1.0);
                    acc = acc + c * ((ushift(kb + e) - ui) * vs.vh[jtop - e] + (ushift(i - e) - ui) * vs.vh[e]);
                }
            } else {
                let w = gregory_weights::<F>(cnt);
                for (m, k) in (kb..=i).enumerate() {
                    acc = acc + w[m] * (ushift(k) - ui) * vs.vh[i - k];
                }
            }
            // plain gain over j in [jtop, i]
            if kb > 0 {
                let w = gregory_weights::<F>(kb + 1);
                let mut g = F::zero();
                if kb + 1 >= 6 {
                    for k in 0..=kb {
                        g = g + ushift(k) * vs.vh[i - k];
                    }
                    for (e, &gw) in crate::quadrature::GREGORY_END.iter().enumerate() {
                        let c = lit::<F>(gw - 1.0);
                        g = g + c * (ushift(e) * vs.vh[i - e] + ushift(kb - e) * vs.vh[jtop + e]);
                    }
                } else {
                    for k in 0..=kb {
                        g = g + w[k] * ushift(k) * vs.vh[i - k];
                    }
                }
                acc = acc + g;
            }
            if let Some(om) = &omega {
                let mut c = F::zero();
                for (l, &t) in self.cheb.iter().enumerate() {
                    c = c + om[l] * (u.at(xi - t * z0) - ui);
                }
                acc = acc + lo_v.amp * z0.powf(lo_v.exp + F::one()) * c;
            }
            if with_tail {
                acc = acc - ui * vs.tail[jtop];
            }
            acc
        };
        let out: Vec<F> = (0..n).into_par_iter().map(node).collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { stage: stage.into(), node: i, x: to_f64(x[i]) });
        }
        Ok(out)
    }

    fn field(&self, values: Vec<F>) -> Field<F> {
        Field { grid: self.grid.clone(), values }
    }

    /// `Q[f]`
    pub fn eval_q(&self, f: &Field<F>) -> Result<Field<F>> {
        self.check_field(f)?;
        let p = Prof::Sampled(self.kernel_profile(f));
        Ok(self.field(self.bform(&p, &p, true, "Q")?))
    }

    /// `𝓛_{f₀}[h] = B(f₀,h) + B(h,f₀)`; `½𝓛_{f₀}[f₀] = Q[f₀]`.
    pub fn eval_lf0(&self, f0: &Field<F>, h: &Field<F>) -> Result<Field<F>> {
        self.check_field(f0)?;
        self.check_field(h)?;
        let a = Prof::Sampled(self.kernel_profile(f0));
        let b = Prof::Sampled(self.kernel_profile(h));
        let t1 = self.bform(&a, &b, true, "L_f0")?;
        let t2 = self.bform(&b, &a, true, "L_f0")?;
        Ok(self.field(t1.iter().zip(&t2).map(|(&p, &q)| p + q).collect()))
    }

    fn require_power(&self) -> Result<()> {
        match self.kernel {
            Kernel::Power { .. } => Ok(()),
            _ => Err(Error::Domain("linearisation about the power law needs the power kernel".into())),
        }
    }

    /// Linearisation about `x^{-(3+λ)/2}`; the reference profile is exact.
    pub fn eval_l(&self, h: &Field<F>) -> Result<Field<F>> {
        self.check_field(h)?;
        self.require_power()?;
        let g = Prof::Exact(PowerLaw { amp: F::one(), exp: lit(-1.5) });
        let b = Prof::Sampled(self.kernel_profile(h));
        let t1 = self.bform(&g, &b, true, "L")?;
        let t2 = self.bform(&b, &g, true, "L")?;
        Ok(self.field(t1.iter().zip(&t2).map(|(&p, &q)| p + q).collect()))
    }

    /// `𝓛_{f₀}[h] - L[h]`, formed from `f₀ - x^{-(3+λ)/2}` directly.
    pub fn eval_l_diff(&self, f0: &Field<F>, h: &Field<F>) -> Result<Field<F>> {
        self.check_field(f0)?;
        self.check_field(h)?;
        self.require_power()?;
        let x = self.grid.nodes();
        let d: Vec<F> = (0..self.n).map(|i| self.kfac[i] * f0.values[i] - x[i].powf(lit(-1.5))).collect();
        let a = Prof::Sampled(self.profile(&d));
        let b = Prof::Sampled(self.kernel_profile(h));
        let t1 = self.bform(&a, &b, true, "L_diff")?;
        let t2 = self.bform(&b, &a, true, "L_diff")?;
        Ok(self.field(t1.iter().zip(&t2).map(|(&p, &q)| p + q).collect()))
    }

    /// `∫₀^{x/2} [u(x-y) - u(x)] v(y) dy` for plain fields (no kernel factor).
    pub fn half_bracket(&self, u: &Field<F>, v: &Field<F>) -> Result<Field<F>> {
        self.check_field(u)?;
        self.check_field(v)?;
        let a = Prof::Sampled(self.profile(&u.values));
        let b = Prof::Sampled(self.profile(&v.values));
        Ok(self.field(self.bform(&a, &b, false, "bracket")?))
    }

    /// Mass flux through `x_max`: pairs whose merged size exceeds the box, per unit time.
    pub fn gel_flux(&self, f: &Field<F>) -> Result<F> {
        self.check_field(f)?;
        let p = self.kernel_profile(f);
        let u = Prof::Sampled(p.clone());
        let vs = self.vside(&u)?;
        let n = self.n;
        let big_x = self.grid.x_max();
        let zs0: F = (self.grid.x_min() / lit(2.0)).ln();
        let tail_ps = if self.ps > F::one() { self.ps - F::one() } else { F::zero() };
        let tv = Profile::new(zs0, self.h, &vs.tail, tail_ps, None);
        let i = n - 1;
        // first half: x = z_j, partner beyond X - x
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for j in 0..n {
            let k = i - j;
            let z = self.z[j];
            let xq = big_x * self.lnq[k].exp();
            a.push(z * u.at(z) * tv.at(xq) * z);
            b.push(xq * u.at(xq) * vs.tail[j] * z);
        }
        let s = crate::quadrature::gregory_sum(&a, self.h) + crate::quadrature::gregory_sum(&b, self.h);
        // below z_0
        let lo = p.lo;
        let z0 = self.z[0];
        let mut below = big_x * u.at(big_x) * vs.tail[0] * z0;
        if lo.amp != F::zero() && lo.exp > -lit::<F>(2.0) {
            below = below + tv.at(big_x) * lo.amp * z0.powf(lo.exp + lit(2.0)) / (lo.exp + lit(2.0));
        }
        let r = s + below;
        if !r.is_finite() {
            return Err(Error::NonFinite { stage: "gel_flux".into(), node: i, x: to_f64(big_x) });
        }
        Ok(r)
    }

    /// Largest decay rate `k(x) ∫ k f₀`, a bound for explicit step sizes.
    pub fn loss_rate_bound(&self, f0: &Field<F>) -> F {
        let p = self.kernel_profile(f0);
        let total = match self.vside(&Prof::Sampled(p)) {
            Ok(v) => v.tail[0].abs(),
            Err(_) => F::zero(),
        };
        let kmax = self.kfac.iter().fold(F::zero(), |m, &v| m.max(v));
        kmax * total
    }
}
