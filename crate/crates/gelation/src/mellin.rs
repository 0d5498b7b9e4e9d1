//! Contour representation of the fundamental solution `g(τ, x, x₀)` of the
//! model linear equation, its tail amplitude `Θ(τ)` and the short-time
//! profile `Ψ(χ)`.
//!
//! Everything here is `f64`: the complex special functions and FFT lattices
//! gain nothing from a generic scalar.

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, lagrange4};

const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_923_517,
    -59.597_960_355_475_491_248,
    14.136_097_974_741_747_174,
    -0.491_913_816_097_620_199_78,
    0.339_946_499_848_118_886_99e-4,
    0.465_236_289_270_485_756_65e-4,
    -0.983_744_753_048_795_646_77e-4,
    0.158_088_703_224_912_488_84e-3,
    -0.210_264_441_724_104_883_19e-3,
    0.217_439_618_115_212_643_20e-3,
    -0.164_318_106_536_763_890_22e-3,
    0.844_182_239_838_527_432_93e-4,
    -0.261_908_384_015_814_086_70e-4,
    0.368_991_826_595_316_227_04e-5,
];

fn lanczos(z: C) -> C {
    let z = z - 1.0;
    let mut x = C::new(LANCZOS[0], 0.0);
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        x += *c / (z + k as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// `ln sin(πz)`, continuous in each closed half-plane and real on `(0, 1)`.
fn ln_sin_pi(z: C) -> C {
    let i = C::i();
    if z.im >= 0.0 {
        -i * PI * z + (C::new(1.0, 0.0) - (2.0 * PI * i * z).exp()).ln() - 2f64.ln() + i * (PI / 2.0)
    } else {
        i * PI * z + (C::new(1.0, 0.0) - (-2.0 * PI * i * z).exp()).ln() - 2f64.ln() - i * (PI / 2.0)
    }
}

/// Principal branch of `ln Γ(z)`.
pub fn log_gamma(z: C) -> Result<C> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("log_gamma of non-finite argument {z}")));
    }
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(Error::Singular(format!("Gamma pole at z = {}", z.re)));
    }
    Ok(if z.re < 0.5 {
        C::new(PI.ln(), 0.0) - ln_sin_pi(z) - lanczos(C::new(1.0, 0.0) - z)
    } else {
        lanczos(z)
    })
}

pub fn gamma(z: C) -> Result<C> {
    Ok(log_gamma(z)?.exp())
}

/// `ln(-Φ(η))` from principal-branch log-Gamma values (branch not tracked).
pub fn log_minus_phi(eta: C, lambda: f64) -> Result<C> {
    let i = C::i();
    let a = log_gamma(i * eta + 1.0 + lambda / 2.0)?;
    let b = log_gamma(i * eta + (lambda + 1.0) / 2.0)?;
    Ok((2.0 * PI.sqrt()).ln() + a - b)
}

/// `Φ(η) = -2√π Γ(iη + 1 + λ/2) / Γ(iη + (λ+1)/2)`.
pub fn phi(eta: C, lambda: f64) -> Result<C> {
    Ok(-log_minus_phi(eta, lambda)?.exp())
}

/// Distance from `η` to the nearest zero or pole of `Φ`.
fn phi_singular_distance(eta: C, lambda: f64) -> f64 {
    let mut best = f64::INFINITY;
    for c in [1.0 + lambda / 2.0, (lambda + 1.0) / 2.0] {
        let n = (eta.im - c).round().max(0.0);
        best = best.min((eta - C::new(0.0, c + n)).norm());
    }
    best
}

/// `1/(1 - e^a)` without overflow.
#[inline]
fn fermi(a: C) -> C {
    if a.re > 0.0 {
        let e = (-a).exp();
        -e / (C::new(1.0, 0.0) - e)
    } else {
        C::new(1.0, 0.0) / (C::new(1.0, 0.0) - a.exp())
    }
}

/// `1/(1 + e^{-a})` without overflow.
#[inline]
fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `1/(1 + e^{-a})` for complex `a` without overflow.
#[inline]
fn logistic_c(a: C) -> C {
    if a.re >= 0.0 {
        C::new(1.0, 0.0) / (C::new(1.0, 0.0) + (-a).exp())
    } else {
        let e = a.exp();
        e / (C::new(1.0, 0.0) + e)
    }
}

/// Short-time profile near the source point: `(2/π) e^{-π/χ^{3/2}} / χ^{3/2}`, zero for `χ ≤ 0`.
pub fn psi_profile(chi: f64) -> f64 {
    if chi <= 0.0 || chi.is_nan() {
        return 0.0;
    }
    let c = chi.powf(1.5);
    2.0 / PI * (-PI / c).exp() / c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Trapezoid,
    Gauss,
}

/// Integration line `Im = imag_offset`, `|Re| ≤ half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub imag_offset: f64,
    pub half_width: f64,
    pub n_points: usize,
    pub rule: Rule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MellinOptions {
    /// Relative size of the discarded Γ tail on the Y-line.
    pub eps_target: f64,
    /// Half-width of the ξ-line.
    pub xi_half_width: f64,
    /// Upper bound on the lattice step.
    pub max_step: f64,
    /// Offset of the η-line; picked automatically when absent.
    pub eta_offset: Option<f64>,
    /// Rule for the Y-integral in `theta`. The FFT paths always use the trapezoid lattice.
    pub y_rule: Rule,
    /// Minimum FFT length for the X-transform.
    pub fft_len: usize,
}

impl Default for MellinOptions {
    fn default() -> Self {
        MellinOptions {
            eps_target: 1e-12,
            xi_half_width: 450.0,
            max_step: 0.01,
            eta_offset: None,
            y_rule: Rule::Trapezoid,
            fft_len: 1 << 17,
        }
    }
}

/// Sizes and endpoint checks reported for `fundsol`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContourDiagnostics {
    pub lambda: f64,
    pub step: f64,
    pub eta_offset: f64,
    pub xi_offset: f64,
    pub y_offset: f64,
    pub xi_half_width: f64,
    pub y_half_width: f64,
    pub eta_points: usize,
    pub xi_points: usize,
    pub y_points: usize,
    pub lattice_points: usize,
    /// `|Γ(iY/κ)|` at the Y-line ends relative to its peak.
    pub y_endpoint_ratio: f64,
}

/// `g(τ, ·, 1)` on a uniform grid in `X = ln x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GTable {
    pub tau: f64,
    pub theta: f64,
    pub x_start: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    /// `|A(±Ξ)| / max|A|` for the ξ-integrand.
    pub endpoint_ratio: f64,
}

impl GTable {
    /// Cubic interpolation in `X`; zero outside the table.
    pub fn at(&self, x_log: f64) -> f64 {
        let u = (x_log - self.x_start) / self.dx;
        let n = self.values.len();
        if !(u >= 1.0 && u < (n - 3) as f64) {
            return 0.0;
        }
        let i = u.floor() as usize;
        let w = lagrange4(u - i as f64);
        w[0] * self.values[i - 1] + w[1] * self.values[i] + w[2] * self.values[i + 1] + w[3] * self.values[i + 2]
    }

    pub fn x_end(&self) -> f64 {
        self.x_start + self.dx * (self.values.len() - 1) as f64
    }
}

/// Contour machinery for one `λ`. Built once, then read-only.
#[derive(Debug, Clone)]
pub struct MellinEngine {
    pub lambda: f64,
    pub kappa: f64,
    /// `(3+λ)/2`
    pub xs: f64,
    pub contour_xi: ContourSpec,
    pub contour_y: ContourSpec,
    pub contour_eta: ContourSpec,
    opts: MellinOptions,
    step: f64,
    window: i64,
    lp: Vec<C>,
    lp_origin: i64,
    s_cum: Vec<C>,
    s_origin: i64,
    v_star: C,
    n_xi: i64,
    n_y: i64,
    y_gamma: Vec<C>,
    y_inv_w: Vec<C>,
    /// `ln 𝒱(ξ + iκ)` on the ξ-line
    xi_lw: Vec<C>,
    /// `ln 𝒱(ρ + i(β - γ₁ + κ))` on the lattice covering `ξ + Y`
    lat_lw: Vec<C>,
    /// decay rate of `|𝒱|` along lines, used to balance the correlation FFTs
    tilt: f64,
    y_endpoint_ratio: f64,
}

impl MellinEngine {
    pub fn new(lambda: f64, opts: MellinOptions) -> Result<Self> {
        if !(lambda > 1.0 && lambda < 2.0) {
            return Err(Error::param("lambda", format!("must lie in (1, 2), got {lambda}")));
        }
        if !(opts.eps_target > 0.0 && opts.eps_target < 1e-3) {
            return Err(Error::param("eps_target", "must lie in (0, 1e-3)"));
        }
        if !(opts.max_step > 0.0 && opts.max_step <= 0.05) {
            return Err(Error::param("max_step", "must lie in (0, 0.05]"));
        }
        let kappa = (lambda - 1.0) / 2.0;
        let xs = (3.0 + lambda) / 2.0;
        let beta = xs + kappa / 5.0;
        let gamma1 = kappa / 8.0;
        // lines on which 𝒱 is tabulated, before reduction into the η-strip
        let lines = [beta + kappa, beta - gamma1 + kappa, xs - gamma1 + kappa, xs];
        let clearance = |b1: f64| {
            // poles of the subtracted Fermi factor sit at Im η = κ(n + 1/2)
            let sp = (b1 / kappa - 0.5).rem_euclid(1.0);
            let mut d = (xs - b1).min(b1 - (xs - 0.5)).min(kappa / 2.0).min(kappa * sp.min(1.0 - sp));
            for &im in &lines {
                let r = (im - b1).rem_euclid(kappa);
                d = d.min(r).min(kappa - r);
            }
            d
        };
        let b1 = match opts.eta_offset {
            Some(b) => {
                if !(b > (2.0 + lambda) / 2.0 && b < xs) {
                    return Err(Error::param("eta_offset", format!("must lie in ({}, {xs})", (2.0 + lambda) / 2.0)));
                }
                b
            }
            None => (0..=120)
                .map(|k| xs - (0.15 + 0.0025 * k as f64) * kappa)
                .max_by(|a, b| clearance(*a).total_cmp(&clearance(*b)))
                .unwrap(),
        };
        let dmin = clearance(b1);
        if dmin <= 0.0 {
            return Err(Error::Singular(format!("η-line offset {b1} sits on a singular line")));
        }
        // the Γ pole under the Y-line and the pole of 𝒱(·+iκ) under the ξ-line also limit the step
        let step = opts.max_step.min(2.0 * PI * dmin.min(gamma1).min(beta - xs) / 32.0);
        let window = (40.0 * kappa / (2.0 * PI * step)).ceil() as i64 + 2;
        let y_hw_raw = (lambda - 1.0) * (1.0 / opts.eps_target).ln() / PI + 10.0;
        let n_y = (y_hw_raw / step).ceil() as i64;
        let n_xi = (opts.xi_half_width / step).ceil() as i64;
        if n_xi < 32 {
            return Err(Error::param("xi_half_width", "too small for the lattice step"));
        }
        let contour_xi = ContourSpec {
            imag_offset: beta,
            half_width: n_xi as f64 * step,
            n_points: (2 * n_xi + 1) as usize,
            rule: Rule::Trapezoid,
        };
        let contour_y = ContourSpec {
            imag_offset: -gamma1,
            half_width: n_y as f64 * step,
            n_points: (2 * n_y + 1) as usize,
            rule: opts.y_rule,
        };
        let n_lat = n_xi + n_y;
        // η-lattice must reach far enough right for the arg(-Φ) → π/4 anchor
        let s_half = n_lat + 1;
        let lp_lo = -(s_half + window + 2);
        let lp_hi = (s_half + window + 2).max((60.0 / step).ceil() as i64);
        let contour_eta = ContourSpec {
            imag_offset: b1,
            half_width: lp_hi as f64 * step,
            n_points: (lp_hi - lp_lo + 1) as usize,
            rule: Rule::Trapezoid,
        };
        let lp = log_phi_line(lambda, b1, lp_lo, lp_hi, step)?;
        let mut eng = MellinEngine {
            lambda,
            kappa,
            xs,
            contour_xi,
            contour_y,
            contour_eta,
            opts,
            step,
            window,
            lp,
            lp_origin: -lp_lo,
            s_cum: Vec::new(),
            s_origin: s_half,
            v_star: C::new(0.0, 0.0),
            n_xi,
            n_y,
            y_gamma: Vec::new(),
            y_inv_w: Vec::new(),
            xi_lw: Vec::new(),
            lat_lw: Vec::new(),
            tilt: 0.0,
            y_endpoint_ratio: 0.0,
        };
        eng.s_cum = eng.build_s(s_half);
        eng.v_star = eng.line_logs(xs, 0, 1)?[0].exp();
        eng.y_gamma = (-n_y..=n_y)
            .map(|j| gamma(C::i() * C::new(j as f64 * step, -gamma1) / kappa))
            .collect::<Result<_>>()?;
        let peak = eng.y_gamma.iter().fold(0.0f64, |m, g| m.max(g.norm()));
        eng.y_endpoint_ratio = eng.y_gamma[0].norm().max(eng.y_gamma.last().unwrap().norm()) / peak;
        eng.y_inv_w = eng.line_logs(xs - gamma1 + kappa, -n_y, (2 * n_y + 1) as usize)?.into_iter().map(|v| (-v).exp()).collect();
        eng.xi_lw = eng.line_logs(beta + kappa, -n_xi, (2 * n_xi + 1) as usize)?;
        eng.lat_lw = eng.line_logs(beta - gamma1 + kappa, -n_lat, (2 * n_lat + 1) as usize)?;
        let last = eng.lat_lw.len() - 1;
        let mid = n_lat as usize;
        let half = mid + (last - mid) / 2;
        eng.tilt = ((eng.lat_lw[half].re - eng.lat_lw[last].re) / ((last - half) as f64 * step)).max(0.0);
        Ok(eng)
    }

    pub fn options(&self) -> MellinOptions {
        self.opts
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn diagnostics(&self) -> ContourDiagnostics {
        ContourDiagnostics {
            lambda: self.lambda,
            step: self.step,
            eta_offset: self.contour_eta.imag_offset,
            xi_offset: self.contour_xi.imag_offset,
            y_offset: self.contour_y.imag_offset,
            xi_half_width: self.contour_xi.half_width,
            y_half_width: self.contour_y.half_width,
            eta_points: self.lp.len(),
            xi_points: self.xi_lw.len(),
            y_points: self.y_gamma.len(),
            lattice_points: self.lat_lw.len(),
            y_endpoint_ratio: self.y_endpoint_ratio,
        }
    }

    #[inline]
    fn lp_at(&self, j: i64) -> C {
        self.lp[(j + self.lp_origin) as usize]
    }

    /// `S(a_j) = ∫ ln(-Φ(η)) [σ(Re η - a_j) - s(η)] dη` at `a_j = j·step`, with `σ` the real logistic
    /// and `s` its continuation to the η-line; built by local increments from `S(0)`.
    fn build_s(&self, half: i64) -> Vec<C> {
        let h = self.step;
        let kk = self.window;
        let c = 2.0 * PI / self.kappa;
        let dsig: Vec<f64> = (-kk..=kk + 1).map(|k| logistic(c * (k - 1) as f64 * h) - logistic(c * k as f64 * h)).collect();
        let inc = |j: i64| -> C {
            let mut acc = C::new(0.0, 0.0);
            for (t, k) in (-kk..=kk + 1).enumerate() {
                acc += self.lp_at(j + k) * dsig[t];
            }
            acc * h
        };
        let n = (2 * half + 1) as usize;
        let incs: Vec<C> = (-half..half).into_par_iter().map(inc).collect();
        let mut s = vec![C::new(0.0, 0.0); n];
        let o = half as usize;
        let b1 = self.contour_eta.imag_offset;
        s[o] = (-kk..=kk)
            .map(|k| {
                let t = k as f64 * h;
                self.lp_at(k) * (logistic(c * t) - logistic_c(C::new(t, b1) * c))
            })
            .sum::<C>()
            * h;
        for j in o..n - 1 {
            s[j + 1] = s[j] + incs[j];
        }
        for j in (0..o).rev() {
            s[j] = s[j + 1] - incs[j];
        }
        s
    }

    /// `ln 𝒱` at `j·step + i·im` for `im` strictly inside the η-strip.
    fn strip_logs(&self, im: f64, j_lo: i64, count: usize) -> Vec<C> {
        let h = self.step;
        let kap = self.kappa;
        let d = im - self.contour_eta.imag_offset;
        let kk = self.window;
        let c = 2.0 * PI / kap;
        let kern: Vec<C> = (-kk..=kk).map(|k| fermi(C::new(-(k as f64) * h, d) * c) - logistic(c * k as f64 * h)).collect();
        (0..count)
            .into_par_iter()
            .map(|q| {
                let j = j_lo + q as i64;
                let mut acc = C::new(0.0, 0.0);
                for (t, k) in (-kk..=kk).enumerate() {
                    acc += self.lp_at(j + k) * kern[t];
                }
                let f = acc * h + self.s_cum[(j + self.s_origin) as usize];
                C::new(0.0, -1.0 / kap) * f
            })
            .collect()
    }

    /// `ln 𝒱` on the line `Im ξ = im` at lattice abscissae, continued out of the strip by
    /// `𝒱(ζ+iκ) = -𝒱(ζ)/Φ(ζ)`. Logs, because `|𝒱|` decays exponentially along the line.
    fn line_logs(&self, im: f64, j_lo: i64, count: usize) -> Result<Vec<C>> {
        let b1 = self.contour_eta.imag_offset;
        let m = ((im - b1) / self.kappa).floor() as i64;
        let zim = im - m as f64 * self.kappa;
        let mut v = self.strip_logs(zim, j_lo, count);
        if m != 0 {
            let kap = self.kappa;
            let lam = self.lambda;
            v.par_iter_mut().enumerate().try_for_each(|(q, val)| -> Result<()> {
                let z = C::new((j_lo + q as i64) as f64 * self.step, zim);
                *val += chain_log(z, m, kap, lam, 0.0)?;
                Ok(())
            })?;
        }
        if let Some(q) = v.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Singular(format!("𝒱 is not finite at {}", C::new((j_lo + q as i64) as f64 * self.step, im))));
        }
        Ok(v)
    }

    #[cfg(test)]
    fn line_values(&self, im: f64, j_lo: i64, count: usize) -> Result<Vec<C>> {
        Ok(self.line_logs(im, j_lo, count)?.into_iter().map(|l| l.exp()).collect())
    }

    /// 𝒱(ξ) by direct quadrature on the engine's η-line.
    pub fn v_function(&self, xi: C) -> Result<C> {
        self.v_direct(xi, self.contour_eta.imag_offset)
    }

    /// 𝒱(ξ) by direct quadrature on the η-line `Im η = b1`, for audits of contour independence.
    pub fn v_direct(&self, xi: C, b1: f64) -> Result<C> {
        self.v_direct_tol(xi, b1, 10.0 * self.step)
    }

    fn v_direct_tol(&self, xi: C, b1: f64, tol: f64) -> Result<C> {
        let lam = self.lambda;
        let kap = self.kappa;
        if !(b1 > (2.0 + lam) / 2.0 && b1 < self.xs) {
            return Err(Error::param("eta_offset", "outside its admissible interval"));
        }
        let m = ((xi.im - b1) / kap).floor() as i64;
        let z = xi - C::new(0.0, m as f64 * kap);
        let d = z.im - b1;
        if d < 1e-3 * kap || d > kap * (1.0 - 1e-3) {
            return Err(Error::Singular(format!("ξ = {xi} lies on a pole line of the η-integrand")));
        }
        let h = self.step;
        let w = (40.0 * kap / (2.0 * PI)).max(3.0);
        let lo = ((z.re.min(0.0) - w) / h).floor() as i64;
        let hi = ((z.re.max(0.0) + w) / h).ceil() as i64;
        let own = b1 == self.contour_eta.imag_offset && lo + self.lp_origin >= 0 && ((hi + self.lp_origin) as usize) < self.lp.len();
        let lp = if own {
            self.lp[(lo + self.lp_origin) as usize..=(hi + self.lp_origin) as usize].to_vec()
        } else {
            log_phi_line(lam, b1, lo, hi.max((60.0 / h).ceil() as i64), h)?
        };
        let c = 2.0 * PI / kap;
        let mut acc = C::new(0.0, 0.0);
        for j in lo..=hi {
            let eta = C::new(j as f64 * h, b1);
            let br = fermi((z - eta) * c) - logistic_c(eta * c);
            acc += lp[(j - lo) as usize] * br;
        }
        Ok((C::new(0.0, -1.0 / kap) * (acc * h) + chain_log(z, m, kap, lam, tol)?).exp())
    }

    /// Tail amplitude `Θ(τ)` of `g(τ, x, 1) ≈ Θ(τ) x^{-(3+λ)/2}`.
    pub fn theta(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("theta needs τ > 0, got {tau}")));
        }
        let kap = self.kappa;
        let lt = tau.ln();
        let g1 = -self.contour_y.imag_offset;
        let sum = match self.contour_y.rule {
            Rule::Trapezoid => {
                let h = self.step;
                (-self.n_y..=self.n_y)
                    .zip(self.y_gamma.iter().zip(&self.y_inv_w))
                    .map(|(j, (g, iw))| {
                        let y = C::new(j as f64 * h, -g1);
                        (C::i() * y * (-lt / kap)).exp() * g * iw
                    })
                    .sum::<C>()
                    * h
            }
            Rule::Gauss => {
                let hw = self.contour_y.half_width;
                let panels = (self.contour_y.n_points / 32).max(8);
                let (gx, gw) = gauss_legendre(8);
                let pw = 2.0 * hw / panels as f64;
                let mut acc = C::new(0.0, 0.0);
                for p in 0..panels {
                    let a = -hw + p as f64 * pw;
                    for (t, wt) in gx.iter().zip(&gw) {
                        let y = C::new(a + 0.5 * pw * (t + 1.0), -g1);
                        let wv = self.v_direct_tol(C::new(0.0, self.xs + kap) + y, self.contour_eta.imag_offset, 0.0)?;
                        acc += (C::i() * y * (-lt / kap)).exp() * gamma(C::i() * y / kap)? / wv * (0.5 * pw * wt);
                    }
                }
                acc
            }
        };
        Ok((self.v_star * sum / (8.0 * PI * PI * kap)).re)
    }

    /// `Σ_j a_j 𝒱(ξ_k + iκ)/𝒱(ξ_k + Y_j + iκ)` for every ξ-node. Split at `Re(ξ+Y) = 0` with an
    /// exponential tilt on each side so both FFT correlations see O(1) data.
    fn ratio_sums(&self, a: &[C]) -> Vec<C> {
        let h = self.step;
        let c = self.tilt;
        let n_lat = self.n_xi + self.n_y;
        let y: Vec<f64> = (-self.n_y..=self.n_y).map(|j| j as f64 * h).collect();
        let mut out = vec![C::new(0.0, 0.0); self.xi_lw.len()];
        for side in [1.0f64, -1.0] {
            let ap: Vec<C> = a.iter().zip(&y).map(|(v, yj)| v * (side * c * yj).exp()).collect();
            let up: Vec<C> = (-n_lat..=n_lat)
                .zip(&self.lat_lw)
                .map(|(i, l)| {
                    let rho = i as f64 * h;
                    let keep = if side > 0.0 { i >= 0 } else { i < 0 };
                    if keep {
                        (-l - side * c * rho).exp()
                    } else {
                        C::new(0.0, 0.0)
                    }
                })
                .collect();
            let b = correlate(&ap, &up);
            for ((k, o), (lw, bk)) in (-self.n_xi..=self.n_xi).zip(out.iter_mut()).zip(self.xi_lw.iter().zip(&b)) {
                *o += (lw + side * c * k as f64 * h).exp() * bk;
            }
        }
        out
    }

    /// `g(τ, e^X, 1)` on the FFT grid restricted to `|X| ≤ x_span`, optionally mollified in `X`
    /// by a Gaussian of width `smoothing`.
    pub fn g_table(&self, tau: f64, x_span: f64, smoothing: f64) -> Result<GTable> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("g_table needs τ > 0, got {tau}")));
        }
        let kap = self.kappa;
        let h = self.step;
        let beta = self.contour_xi.imag_offset;
        let g1 = -self.contour_y.imag_offset;
        let lt = tau.ln();
        let a: Vec<C> = (-self.n_y..=self.n_y)
            .zip(&self.y_gamma)
            .map(|(j, g)| (C::i() * C::new(j as f64 * h, -g1) * (-lt / kap)).exp() * g * h)
            .collect();
        let wb = self.ratio_sums(&a);
        let s2 = smoothing * smoothing;
        let amp: Vec<C> = (-self.n_xi..=self.n_xi)
            .zip(&wb)
            .map(|(k, v)| {
                let xi = C::new(k as f64 * h, beta);
                v / (4.0 * PI * PI * kap) * (-0.5 * s2 * xi * xi).exp()
            })
            .collect();
        let peak = amp.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let ends = amp[0].norm().max(amp.last().unwrap().norm());
        let endpoint_ratio = if peak > 0.0 { ends / peak } else { 0.0 };
        if !(endpoint_ratio < 1e-12) {
            return Err(Error::Underresolved(format!(
                "ξ-integrand at |Re ξ| = {:.1} is {endpoint_ratio:.2e} of its peak at τ = {tau}; increase xi_half_width",
                self.contour_xi.half_width
            )));
        }
        let theta = self.theta(tau)? * (0.5 * s2 * self.xs * self.xs).exp();
        let n = self.opts.fft_len.max(amp.len().next_power_of_two());
        let dx = 2.0 * PI / (n as f64 * h);
        let x_lo = -PI / h;
        let xi_hw = self.n_xi as f64 * h;
        let mut buf: Vec<C> = vec![C::new(0.0, 0.0); n];
        for (k, v) in amp.iter().enumerate() {
            buf[k] = v * C::from_polar(1.0, k as f64 * h * x_lo);
        }
        FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut buf);
        let m_lo = ((-x_span - x_lo) / dx).floor().max(0.0) as usize;
        let m_hi = (((x_span - x_lo) / dx).ceil() as usize).min(n - 1);
        let values: Vec<f64> = (m_lo..=m_hi)
            .map(|m| {
                let x = x_lo + m as f64 * dx;
                let s = (C::from_polar(h, -xi_hw * x) * buf[m]).re * (-beta * x).exp();
                theta * (-self.xs * x).exp() + s
            })
            .collect();
        Ok(GTable { tau, theta, x_start: x_lo + m_lo as f64 * dx, dx, values, endpoint_ratio })
    }

    /// `g(τ, x, x₀) = g(τ x₀^κ, x/x₀, 1)/x₀`, using the short-time profile near `x₀` for small local times.
    pub fn fundamental_solution(&self, tau: f64, x: f64, x0: f64) -> Result<f64> {
        if !(tau > 0.0 && x > 0.0 && x0 > 0.0) {
            return Err(Error::Domain("fundamental_solution needs τ, x, x₀ > 0".into()));
        }
        let t = tau * x0.powf(self.kappa);
        let y = x / x0;
        if let Some(v) = boundary_layer(t, y) {
            return Ok(v / x0);
        }
        let tab = self.g_table(t, y.ln().abs() + 1.0, 0.0)?;
        Ok(tab.at(y.ln()) / x0)
    }
}

/// Short-time form `t^{-2} Ψ((y-1)/t²)` where it applies.
pub fn boundary_layer(t: f64, y: f64) -> Option<f64> {
    if t < 0.1 && (y - 1.0).abs() < (4.0 * t * t).min(0.5) {
        Some(psi_profile((y - 1.0) / (t * t)) / (t * t))
    } else {
        None
    }
}

/// Continuous `ln(-Φ)` on `η = j·h + i b1`, `j ∈ [lo, hi]`, with `arg → π/4` at the right end.
fn log_phi_line(lambda: f64, b1: f64, lo: i64, hi: i64, h: f64) -> Result<Vec<C>> {
    let mut v: Vec<C> = (lo..=hi)
        .into_par_iter()
        .map(|j| log_minus_phi(C::new(j as f64 * h, b1), lambda))
        .collect::<Result<_>>()?;
    let mut shift = 0.0;
    for k in 1..v.len() {
        let raw = v[k].im + shift;
        let d = raw - v[k - 1].im;
        shift -= 2.0 * PI * (d / (2.0 * PI)).round();
        v[k].im += shift;
    }
    let last = v.last().unwrap().im;
    let fix = 2.0 * PI * ((PI / 4.0 - last) / (2.0 * PI)).round();
    for z in v.iter_mut() {
        z.im += fix;
    }
    Ok(v)
}

/// Log of the `-Φ` factors carrying 𝒱 from `z` (inside the strip) to `z + i m κ`.
fn chain_log(z: C, m: i64, kap: f64, lam: f64, tol: f64) -> Result<C> {
    let mut f = C::new(0.0, 0.0);
    let guard = |eta: C| -> Result<C> {
        if phi_singular_distance(eta, lam) < tol {
            return Err(Error::Singular(format!("continuation of 𝒱 passes within {tol:.3} of a singular point near {eta}")));
        }
        log_minus_phi(eta, lam)
    };
    if m > 0 {
        for j in 0..m {
            f -= guard(z + C::new(0.0, j as f64 * kap))?;
        }
    } else {
        for j in 0..-m {
            f += guard(z - C::new(0.0, (j + 1) as f64 * kap))?;
        }
    }
    Ok(f)
}

/// `c_k = Σ_j a_j b_{k+j}` for `k = 0..=b.len()-a.len()`.
fn correlate(a: &[C], b: &[C]) -> Vec<C> {
    let na = a.len();
    let nb = b.len();
    let n = (na + nb).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut x = vec![C::new(0.0, 0.0); n];
    for (j, v) in a.iter().enumerate() {
        x[na - 1 - j] = *v;
    }
    let mut y = vec![C::new(0.0, 0.0); n];
    y[..nb].copy_from_slice(b);
    fwd.process(&mut x);
    fwd.process(&mut y);
    for (p, q) in x.iter_mut().zip(&y) {
        *p *= q;
    }
    inv.process(&mut x);
    let s = 1.0 / n as f64;
    (0..=nb - na).map(|k| x[k + na - 1] * s).collect()
}

/// `Θ` on a log-spaced ladder, interpolated in `ln τ`; a power law below the first node.
#[derive(Debug, Clone)]
pub struct ThetaTable {
    pub ln_tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl ThetaTable {
    pub fn new(engine: &MellinEngine, tau_min: f64, tau_max: f64, per_decade: usize) -> Result<Self> {
        if !(tau_min > 0.0 && tau_max > tau_min) {
            return Err(Error::Domain("ThetaTable needs 0 < τ_min < τ_max".into()));
        }
        let n = ((tau_max / tau_min).log10() * per_decade as f64).ceil() as usize + 1;
        let ln_tau: Vec<f64> =
            (0..n).map(|k| tau_min.ln() + (tau_max / tau_min).ln() * k as f64 / (n - 1) as f64).collect();
        let values = ln_tau.par_iter().map(|l| engine.theta(l.exp())).collect::<Result<_>>()?;
        Ok(ThetaTable { ln_tau, values })
    }

    pub fn at(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let l = tau.ln();
        let n = self.ln_tau.len();
        if l <= self.ln_tau[0] {
            // power law through the first two nodes
            let s = ((self.values[1] / self.values[0]).ln() / (self.ln_tau[1] - self.ln_tau[0])).max(1.0);
            return self.values[0] * ((l - self.ln_tau[0]) * s).exp();
        }
        if l >= self.ln_tau[n - 1] {
            return self.values[n - 1];
        }
        let d = self.ln_tau[1] - self.ln_tau[0];
        let u = (l - self.ln_tau[0]) / d;
        let i = (u.floor() as usize).min(n - 2);
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// `g(τ_loc, e^X, 1)` mollified in `X`, on a log ladder of local times, for Duhamel sums.
#[derive(Debug, Clone)]
pub struct GKernelTable {
    pub ln_tau: Vec<f64>,
    pub rows: Vec<GTable>,
    pub smoothing: f64,
}

impl GKernelTable {
    pub fn new(engine: &MellinEngine, tau_min: f64, tau_max: f64, per_decade: usize, x_span: f64, smoothing: f64) -> Result<Self> {
        if !(tau_min > 0.0 && tau_max > tau_min) {
            return Err(Error::Domain("GKernelTable needs 0 < τ_min < τ_max".into()));
        }
        let n = ((tau_max / tau_min).log10() * per_decade as f64).ceil() as usize + 1;
        let ln_tau: Vec<f64> =
            (0..n).map(|k| tau_min.ln() + (tau_max / tau_min).ln() * k as f64 / (n - 1) as f64).collect();
        let rows = ln_tau.iter().map(|l| engine.g_table(l.exp(), x_span, smoothing)).collect::<Result<_>>()?;
        Ok(GKernelTable { ln_tau, rows, smoothing })
    }

    /// Row bracket and weight for `τ_loc`; the first row stands in below `τ_min`.
    pub fn locate(&self, tau: f64) -> (usize, usize, f64) {
        let n = self.ln_tau.len();
        if tau <= 0.0 {
            return (0, 0, 0.0);
        }
        let l = tau.ln();
        if l <= self.ln_tau[0] {
            return (0, 0, 0.0);
        }
        if l >= self.ln_tau[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let d = self.ln_tau[1] - self.ln_tau[0];
        let u = (l - self.ln_tau[0]) / d;
        let i = (u.floor() as usize).min(n - 2);
        (i, i + 1, u - i as f64)
    }

    pub fn at(&self, tau: f64, x_log: f64) -> f64 {
        let (i, j, w) = self.locate(tau);
        let a = self.rows[i].at(x_log);
        if w == 0.0 {
            a
        } else {
            a * (1.0 - w) + self.rows[j].at(x_log) * w
        }
    }

    pub fn tau_max(&self) -> f64 {
        self.ln_tau.last().unwrap().exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn engine() -> &'static MellinEngine {
        static E: OnceLock<MellinEngine> = OnceLock::new();
        E.get_or_init(|| MellinEngine::new(1.5, MellinOptions::default()).unwrap())
    }

    fn close(a: C, b: C, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(C::new(1.0, 0.0)).unwrap().norm() < 1e-14);
        assert!((log_gamma(C::new(0.5, 0.0)).unwrap().re - 0.572_364_942_924_700_1).abs() < 1e-14);
        assert!((log_gamma(C::new(5.0, 0.0)).unwrap().re - 24f64.ln()).abs() < 1e-13);
        // principal branch, reference values from an arbitrary-precision library
        let cases = [
            (C::new(0.3, 150.0), C::new(-235.702_637_233_735_7, 601.281_279_293_789_7)),
            (C::new(-3.7, 2.5), C::new(-8.049_706_377_632_447, -9.468_499_340_646_116)),
            (C::new(-3.7, -2.5), C::new(-8.049_706_377_632_447, 9.468_499_340_646_116)),
            (C::new(0.1, -0.2), C::new(1.419_622_556_608_801, 1.189_458_456_191_653_5)),
        ];
        for (z, want) in cases {
            let got = log_gamma(z).unwrap();
            assert!(close(got, want, 1e-13), "{z}: {got} vs {want}");
        }
    }

    #[test]
    fn log_gamma_rejects_poles() {
        for z in [0.0, -1.0, -7.0] {
            assert!(matches!(log_gamma(C::new(z, 0.0)), Err(Error::Singular(_))));
        }
    }

    #[test]
    fn log_gamma_recurrence() {
        for &(re, im) in &[(0.2, 3.0), (-2.3, 0.7), (4.5, -40.0), (0.6, 199.0)] {
            let z = C::new(re, im);
            let lhs = log_gamma(z + 1.0).unwrap();
            let rhs = log_gamma(z).unwrap() + z.ln();
            // equal modulo 2πi
            let d = lhs - rhs;
            let k = (d.im / (2.0 * PI)).round();
            assert!((d - C::new(0.0, 2.0 * PI * k)).norm() < 1e-12 * lhs.norm().max(1.0), "{z}");
        }
    }

    #[test]
    fn phi_at_origin() {
        let v = phi(C::new(0.0, 0.0), 1.5).unwrap();
        assert!(v.im.abs() < 1e-15);
        assert!((v.re + 3.594_420_704_206_775_5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn phi_conjugate_symmetry() {
        for &(re, im) in &[(0.7, 0.0), (-2.1, 0.0), (3.3, 1.9), (0.4, -0.8)] {
            let eta = C::new(re, im);
            let a = phi(-eta.conj(), 1.5).unwrap();
            let b = phi(eta, 1.5).unwrap().conj();
            assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn phi_argument_at_large_real_part() {
        let e = engine();
        let b1 = e.contour_eta.imag_offset;
        let line = log_phi_line(1.5, b1, 0, (100.0 / e.step()).round() as i64, e.step()).unwrap();
        let arg = line.last().unwrap().im;
        assert!((arg - PI / 4.0).abs() < 0.01, "{arg}");
    }

    #[test]
    fn v_lattice_matches_direct() {
        let e = engine();
        let kap = e.kappa;
        let im = e.contour_xi.imag_offset + kap;
        let js = [-700i64, -30, 41, 1234];
        for &j in &js {
            let lat = e.line_values(im, j, 1).unwrap()[0];
            let dir = e.v_function(C::new(j as f64 * e.step(), im)).unwrap();
            assert!(close(lat, dir, 1e-10), "j = {j}: {lat} vs {dir}");
        }
    }

    #[test]
    fn v_conjugate_symmetry() {
        let e = engine();
        for &xi in &[C::new(0.73, 2.3), C::new(-4.1, 2.61), C::new(12.5, 2.0)] {
            let a = e.v_function(-xi.conj()).unwrap();
            let b = e.v_function(xi).unwrap().conj();
            assert!(close(a, b, 1e-8), "{xi}: {a} vs {b}");
        }
    }

    #[test]
    fn v_contour_independence() {
        let e = engine();
        let b1 = e.contour_eta.imag_offset;
        // points mid-way between pole lines of the η-integrand for all three offsets
        let mid = b1 + e.kappa / 2.0;
        for &xi in &[C::new(0.3, mid + e.kappa), C::new(-2.0, mid), C::new(5.0, mid - 0.02)] {
            let v0 = e.v_direct(xi, b1).unwrap();
            for db in [-0.02, 0.02] {
                let v1 = e.v_direct(xi, b1 + db).unwrap();
                assert!((v1 - v0).norm() < 1e-6 * v0.norm(), "{xi} {db}: {v0} vs {v1}");
            }
        }
    }

    #[test]
    fn v_is_continuous_along_real_direction() {
        let e = engine();
        let xi = C::new(0.4, 2.45);
        let v = e.v_function(xi).unwrap();
        let d1 = (e.v_function(xi + 1e-3).unwrap() - v).norm();
        let d2 = (e.v_function(xi + 5e-4).unwrap() - v).norm();
        assert!(d1 < 1e-2 * v.norm());
        assert!((d1 / d2 - 2.0).abs() < 0.05, "{}", d1 / d2);
    }

    #[test]
    fn v_refuses_singular_points() {
        let e = engine();
        // 𝒱 picks up a pole where the continuation factor -Φ vanishes
        let kap = e.kappa;
        let bad = C::new(0.0, 1.25 + 1.0 + kap);
        assert!(matches!(e.v_function(bad), Err(Error::Singular(_))));
    }

    #[test]
    fn psi_profile_values() {
        assert_eq!(psi_profile(-1.0), 0.0);
        assert_eq!(psi_profile(0.0), 0.0);
        assert!((psi_profile(1.0) - 2.0 / PI * (-PI).exp()).abs() < 1e-16);
        assert!(psi_profile(1e-3) < 1e-300);
    }

    #[test]
    fn theta_rules_agree() {
        let e = engine();
        let g = MellinEngine::new(1.5, MellinOptions { y_rule: Rule::Gauss, ..MellinOptions::default() }).unwrap();
        for tau in [0.05, 0.5] {
            let a = e.theta(tau).unwrap();
            let b = g.theta(tau).unwrap();
            assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn scaling_in_source_position() {
        let e = engine();
        let x = 9.0;
        let a = e.fundamental_solution(0.5, x, 4.0).unwrap();
        let t = 0.5 * 4f64.powf(e.kappa);
        let tab = e.g_table(t, 5.0, 0.0).unwrap();
        let b = tab.at((x / 4.0).ln()) / 4.0;
        assert!((a - b).abs() <= 1e-14 * b.abs());
    }

    #[test]
    fn tail_amplitude_matches_theta() {
        let e = engine();
        let tab = e.g_table(0.5, 12.0, 0.0).unwrap();
        for x in [1e2, 1e3, 1e4] {
            let r = tab.at(f64::ln(x)) * x.powf(e.xs) / tab.theta;
            assert!((r - 1.0).abs() < 0.02, "{x}: {r}");
        }
    }

    #[test]
    fn underresolved_line_is_reported() {
        let e = MellinEngine::new(1.5, MellinOptions { xi_half_width: 3.0, ..MellinOptions::default() }).unwrap();
        assert!(matches!(e.g_table(0.05, 5.0, 0.0), Err(Error::Underresolved(_))));
    }
}
