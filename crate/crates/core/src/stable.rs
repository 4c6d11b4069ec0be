//! Symmetric alpha-stable laws normalised as `E exp(i h X) = exp(-sigma^alpha |h|^alpha)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, check_nonnegative, Error, Result};
use crate::mc::{map_chunks, reduce_moment_vecs, Moments};
use crate::quad::{integrate, QuadSpec};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    pub alpha: f64,
    pub scale: f64,
}

impl StableLaw {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        check_alpha(alpha)?;
        check_nonnegative("scale", scale)?;
        Ok(Self { alpha, scale })
    }

    /// Law of `Z_t` for a standard process: scale `t^(1/alpha)`.
    pub fn at_time(alpha: f64, t: f64) -> Result<Self> {
        check_nonnegative("t", t)?;
        Self::new(alpha, t.powf(1.0 / alpha))
    }

    pub fn characteristic_function(&self, h: f64) -> f64 {
        (-(self.scale * h.abs()).powf(self.alpha)).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * standard_draw(self.alpha, rng)
    }
}

/// Chambers–Mallows–Stuck transform of a uniform angle `u` in `(-pi/2, pi/2)`
/// and a standard exponential `e`.
#[inline]
pub fn cms_transform(alpha: f64, u: f64, e: f64) -> f64 {
    let inv = 1.0 / alpha;
    (alpha * u).sin() / u.cos().powf(inv) * ((u * (1.0 - alpha)).cos() / e).powf((1.0 - alpha) * inv)
}

/// One standard draw; `alpha` is assumed valid.
#[inline]
pub(crate) fn standard_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v: f64 = rng.sample(Open01);
    let w: f64 = rng.sample(Open01);
    cms_transform(alpha, PI * (v - 0.5), -w.ln())
}

/// One draw of the symmetric law with characteristic function `exp(-|h|^alpha)`.
pub fn sample_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(standard_draw(alpha, rng))
}

/// `Gamma(-alpha)` for `alpha` in `(1, 2)`, through `Gamma(2 - alpha)` to stay
/// away from the poles.
pub fn gamma_neg_alpha(alpha: f64) -> f64 {
    libm::tgamma(2.0 - alpha) / ((-alpha) * (1.0 - alpha))
}

/// Density constant of the Lévy measure `c_alpha / |xi|^(1 + alpha)`:
/// `c_alpha = 1 / (2 (-Gamma(-alpha) cos(pi alpha / 2)))`.
pub fn levy_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(0.5 / (-gamma_neg_alpha(alpha) * (FRAC_PI_2 * alpha).cos()))
}

/// Value of `int_R (1 - cos xi) c_alpha |xi|^(-1-alpha) d xi`, which equals 1
/// exactly when `c_alpha` matches the normalisation of the characteristic
/// function. Computed by adaptive quadrature, independent of the closed form
/// for `Gamma`.
pub fn levy_khintchine_integral(alpha: f64, c_alpha: f64, spec: &QuadSpec) -> Result<f64> {
    check_alpha(alpha)?;
    let one_minus_cos = |x: f64| 2.0 * (0.5 * x).sin().powi(2);
    // (0, 1]: xi = u^p flattens the xi^(1 - alpha) endpoint behaviour
    let p = 1.0 / (2.0 - alpha);
    let near = integrate(
        |u: f64| {
            if u == 0.0 {
                return 0.5 * p;
            }
            let xi = u.powf(p);
            p * one_minus_cos(xi) * u.powf(-p * alpha - 1.0)
        },
        0.0,
        1.0,
        spec,
    )?
    .value;
    // [1, 2 pi K] panel by panel, analytic tail past 2 pi K
    let periods = 400usize;
    let f = |x: f64| one_minus_cos(x) * x.powf(-1.0 - alpha);
    let mut far = integrate(f, 1.0, 2.0 * PI, spec)?.value;
    for k in 1..periods {
        far += integrate(f, 2.0 * PI * k as f64, 2.0 * PI * (k + 1) as f64, spec)?.value;
    }
    let x_end = 2.0 * PI * periods as f64;
    let s = 1.0 + alpha;
    let tail = x_end.powf(-alpha) / alpha - s * x_end.powf(-s - 1.0);
    Ok(2.0 * c_alpha * (near + far + tail))
}

/// Stable scale of `beta_n int_0^t exp(-gamma_n (t - s)) dZ_s`:
/// `beta_n ((1 - exp(-alpha gamma_n t)) / (alpha gamma_n))^(1/alpha)`.
pub fn kernel_scale(gamma_n: f64, beta_n: f64, alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_nonnegative("gamma_n", gamma_n)?;
    check_nonnegative("beta_n", beta_n)?;
    check_nonnegative("t", t)?;
    Ok(kernel_scale_unchecked(gamma_n, beta_n, alpha, t))
}

#[inline]
pub(crate) fn kernel_scale_unchecked(gamma_n: f64, beta_n: f64, alpha: f64, t: f64) -> f64 {
    let rate = alpha * gamma_n;
    let norm = if rate == 0.0 { t } else { -(-rate * t).exp_m1() / rate };
    beta_n * norm.powf(1.0 / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcfRow {
    pub h: f64,
    pub real: f64,
    pub imag: f64,
    pub target: f64,
    pub abs_error: f64,
    pub real_std_error: f64,
    pub imag_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcfReport {
    pub alpha: f64,
    pub n_samples: usize,
    pub rows: Vec<EcfRow>,
    /// Max over `h` of `|Re ecf(h) - exp(-|h|^alpha)|`.
    pub max_abs_error: f64,
    pub max_abs_imag: f64,
}

/// One row per `(alpha, h)`.
pub fn write_ecf_csv<W: Write>(reports: &[EcfReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "alpha,h,real,imag,target,abs_error,real_std_error,imag_std_error")?;
    for r in reports {
        for row in &r.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.alpha, row.h, row.real, row.imag, row.target, row.abs_error, row.real_std_error, row.imag_std_error
            )?;
        }
    }
    Ok(())
}

/// Compares the empirical characteristic function of standard draws with
/// `exp(-|h|^alpha)`.
pub fn ecf_check(alpha: f64, h_values: &[f64], n_samples: usize, rng: RngStream) -> Result<EcfReport> {
    check_alpha(alpha)?;
    if n_samples < 10_000 {
        return Err(Error::ParameterOutOfRange {
            name: "n_samples",
            value: n_samples as f64,
            bound: "must be >= 10^4".into(),
        });
    }
    let k = h_values.len();
    let parts = map_chunks(n_samples, rng, |g, range| {
        let mut acc = vec![Moments::default(); 2 * k];
        for _ in range {
            let x = standard_draw(alpha, g);
            for (j, &h) in h_values.iter().enumerate() {
                let (s, c) = (h * x).sin_cos();
                acc[2 * j].push(c);
                acc[2 * j + 1].push(s);
            }
        }
        Ok(acc)
    })?;
    let acc = reduce_moment_vecs(&parts, 2 * k);
    let rows: Vec<EcfRow> = h_values
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let target = (-h.abs().powf(alpha)).exp();
            let (re, im) = (acc[2 * j], acc[2 * j + 1]);
            EcfRow {
                h,
                real: re.mean,
                imag: im.mean,
                target,
                abs_error: (re.mean - target).abs(),
                real_std_error: re.std_error(),
                imag_std_error: im.std_error(),
            }
        })
        .collect();
    Ok(EcfReport {
        alpha,
        n_samples,
        max_abs_error: rows.iter().map(|r| r.abs_error).fold(0.0, f64::max),
        max_abs_imag: rows.iter().map(|r| r.imag.abs()).fold(0.0, f64::max),
        rows,
    })
}
