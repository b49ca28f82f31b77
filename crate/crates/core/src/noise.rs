//! Truncated cylindrical Wiener noise and the affine Nemytskii diffusion
//! `B(v, w) u = (0, (b0 + b1 v) u)`.
//!
//! The product of two sine series is an exact finite cosine series,
//!
//! ```text
//! 2 sin(m pi x) sin(n pi x) = cos((m - n) pi x) - cos((m + n) pi x),
//! ```
//!
//! and each cosine harmonic has a closed-form projection onto the sine basis,
//!
//! ```text
//! <e_k, cos(j pi x)> = (sqrt 2 / 2) [ (1 - (-1)^{k+j}) / ((k + j) pi)
//!                                   + (1 - (-1)^{k-j}) / ((k - j) pi) ]
//! ```
//!
//! with the second summand dropped for `k == j`. Only `k + j` odd contributes,
//! where the bracket collapses to `2 sqrt(2) k / (pi (k^2 - j^2))`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::spectral::PairState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub b0: f64,
    pub b1: f64,
    /// Number of driven Wiener modes `K`.
    pub noise_cutoff: usize,
}

impl NoiseModel {
    pub fn new(b0: f64, b1: f64, noise_cutoff: usize) -> Result<Self> {
        if noise_cutoff == 0 {
            return Err(Error::invalid("noise_cutoff", "must be at least 1"));
        }
        if !(b0.is_finite() && b1.is_finite()) {
            return Err(Error::invalid("b0/b1", "must be finite"));
        }
        Ok(Self {
            b0,
            b1,
            noise_cutoff,
        })
    }

    pub fn is_silent(&self) -> bool {
        self.b0 == 0.0 && self.b1 == 0.0
    }
}

/// Mode increments of the Wiener process over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement {
    pub betas: Vec<f64>,
    pub step: f64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-addressed Gaussian source.
///
/// Standard normal number `k` of step `n` on path `p` is a pure function of
/// `(seed, p, n, k)`: the path selects the ChaCha stream and `(n, k)` the word
/// position, so draws never depend on thread scheduling or on how many modes
/// are requested.
#[derive(Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut sm = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut sm).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(path);
        Self { rng }
    }

    /// Fills `out` with the standard normals of `step`, modes `0..out.len()`.
    pub fn standard_normals(&mut self, step: u64, out: &mut [f64]) {
        self.rng.set_word_pos((step as u128) << 32);
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (z0, z1) = self.box_muller();
            pair[0] = z0;
            pair[1] = z1;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.box_muller().0;
        }
    }

    fn box_muller(&mut self) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }
}

/// `K` independent `N(0, h)` mode increments for `step` of the stream.
pub fn sample_increment(
    stream: &mut NoiseStream,
    step: u64,
    modes: usize,
    h: f64,
) -> Result<WienerIncrement> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", format!("must be positive, got {h}")));
    }
    if modes == 0 {
        return Err(Error::invalid("modes", "must be at least 1"));
    }
    let mut betas = vec![0.0; modes];
    stream.standard_normals(step, &mut betas);
    let sd = h.sqrt();
    betas.iter_mut().for_each(|b| *b *= sd);
    Ok(WienerIncrement { betas, step: h })
}

/// `<e_k, cos(j pi x)>` for `k >= 1`, `j >= 0`.
pub fn cosine_to_sine(k: usize, j: usize) -> f64 {
    if (k + j).is_multiple_of(2) {
        return 0.0;
    }
    let (k, j) = (k as f64, j as f64);
    SQRT_2 / PI * 2.0 * k / (k * k - j * j)
}

/// Exact sine-basis projection of pointwise products, with the cosine-to-sine
/// table precomputed for fixed input and output lengths.
#[derive(Debug, Clone)]
pub struct ProductKernel {
    v_len: usize,
    g_len: usize,
    out_cutoff: usize,
    /// Row `k - 1` holds `<e_k, cos(j pi x)>` for `j` of parity opposite to `k`,
    /// in increasing order; `row_len[k - 1]` entries each.
    table: Vec<f64>,
    row_start: Vec<usize>,
    row_len: Vec<usize>,
}

/// Scratch space for [`ProductKernel::apply`].
#[derive(Debug, Clone, Default)]
pub struct ProductScratch {
    cos: Vec<f64>,
    even: Vec<f64>,
    odd: Vec<f64>,
}

impl ProductKernel {
    pub fn new(v_len: usize, g_len: usize, out_cutoff: usize) -> Self {
        let top = v_len + g_len;
        let mut table = Vec::new();
        let mut row_start = Vec::with_capacity(out_cutoff);
        let mut row_len = Vec::with_capacity(out_cutoff);
        for k in 1..=out_cutoff {
            row_start.push(table.len());
            let first = (k + 1) % 2;
            let mut count = 0;
            let mut j = first;
            while j <= top {
                table.push(cosine_to_sine(k, j));
                count += 1;
                j += 2;
            }
            row_len.push(count);
        }
        Self {
            v_len,
            g_len,
            out_cutoff,
            table,
            row_start,
            row_len,
        }
    }

    pub fn out_cutoff(&self) -> usize {
        self.out_cutoff
    }

    /// `out[k-1] = <e_k, v g>`; `out` is overwritten.
    pub fn apply(&self, v: &[f64], g: &[f64], out: &mut [f64], scratch: &mut ProductScratch) {
        assert_eq!(v.len(), self.v_len);
        assert_eq!(g.len(), self.g_len);
        assert_eq!(out.len(), self.out_cutoff);
        let top = self.v_len + self.g_len;
        let c = &mut scratch.cos;
        c.clear();
        c.resize(top + 1, 0.0);
        cosine_series(v, g, c);

        scratch.even.clear();
        scratch.odd.clear();
        scratch.even.extend(c.iter().step_by(2));
        scratch.odd.extend(c.iter().skip(1).step_by(2));

        for (k, o) in out.iter_mut().enumerate() {
            let start = self.row_start[k];
            let row = &self.table[start..start + self.row_len[k]];
            // mode k+1 odd pairs with even harmonics
            let src = if k % 2 == 0 { &scratch.even } else { &scratch.odd };
            *o = dot(row, &src[..row.len()]);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// Cosine coefficients `c_j` of `v g` where `v`, `g` are sine coefficient
/// vectors in the `e_n` normalisation. `c` must be zeroed, length `>= len(v) + len(g) + 1`.
fn cosine_series(v: &[f64], g: &[f64], c: &mut [f64]) {
    let (n_len, k_len) = (v.len(), g.len());
    // every loop below runs forward over contiguous slices so it vectorises
    for (mi, &a) in v.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let m = mi + 1;
        // n = 1..=K  ->  -cos((m + n) pi x)
        for (dst, &b) in c[m + 1..=m + k_len].iter_mut().zip(g) {
            *dst -= a * b;
        }
        // n = m + d  ->  cos(d pi x)
        if m < k_len {
            for (dst, &b) in c[1..=k_len - m].iter_mut().zip(&g[m..]) {
                *dst += a * b;
            }
        }
    }
    // m = n + d  ->  cos(d pi x)
    for (ni, &b) in g.iter().enumerate() {
        let n = ni + 1;
        if b == 0.0 || n >= n_len {
            continue;
        }
        for (dst, &a) in c[1..=n_len - n].iter_mut().zip(&v[n..]) {
            *dst += a * b;
        }
    }
    c[0] += dot(&v[..n_len.min(k_len)], &g[..n_len.min(k_len)]);
}

/// Exact coefficients `<e_k, v g>` for `k = 1..=out_cutoff`.
pub fn sine_expand_product(v: &[f64], g: &[f64], out_cutoff: usize) -> Vec<f64> {
    let kernel = ProductKernel::new(v.len(), g.len(), out_cutoff);
    let mut out = vec![0.0; out_cutoff];
    kernel.apply(v, g, &mut out, &mut ProductScratch::default());
    out
}

/// Applies the diffusion to the increment `g`: `(0, b0 g + b1 P_N(v g))`.
pub fn apply_diffusion(x: &PairState, g: &[f64], model: &NoiseModel) -> Result<PairState> {
    if g.len() != model.noise_cutoff {
        return Err(Error::LengthMismatch {
            expected: model.noise_cutoff,
            found: g.len(),
        });
    }
    let n = x.grid().cutoff();
    if g.len() > n {
        return Err(Error::invalid(
            "noise_cutoff",
            format!("{} exceeds grid cutoff {n}", g.len()),
        ));
    }
    let mut vel = if model.b1 != 0.0 {
        let mut p = sine_expand_product(x.pos(), g, n);
        p.iter_mut().for_each(|c| *c *= model.b1);
        p
    } else {
        vec![0.0; n]
    };
    for (dst, &gk) in vel.iter_mut().zip(g) {
        *dst += model.b0 * gk;
    }
    PairState::new(x.grid().clone(), vec![0.0; n], vel)
}

/// Product on a collocation grid via fast transforms.
///
/// Both factors are synthesised on the `x_i = i/L` grid by a sine transform,
/// multiplied pointwise, and the cosine coefficients of the product recovered
/// by a cosine transform; with `L >= len(v) + len(g)` this recovery is exact.
/// The cosine-to-sine projection is then one linear convolution done by FFT.
pub struct FastProduct {
    v_len: usize,
    g_len: usize,
    out_cutoff: usize,
    grid_len: usize,
    fwd: Arc<dyn Fft<f64>>,
    conv_fwd: Arc<dyn Fft<f64>>,
    conv_inv: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
}

impl FastProduct {
    pub fn new(v_len: usize, g_len: usize, out_cutoff: usize, dealias_factor: f64) -> Result<Self> {
        if !(dealias_factor >= 2.0) {
            return Err(Error::invalid(
                "dealias_factor",
                format!("must be at least 2, got {dealias_factor}"),
            ));
        }
        let base = v_len.max(g_len).max(out_cutoff).max(1);
        let need = ((dealias_factor * base as f64).ceil() as usize).max(v_len + g_len);
        let grid_len = need.next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(2 * grid_len);

        // out_k = sqrt2/(2 pi) sum_{j=-J..J} c~_j D(k - j), D(m) = (1 - (-1)^m)/m
        let top = v_len + g_len;
        let kernel_len = out_cutoff + 2 * top;
        let conv_len = (2 * top + 1 + kernel_len).next_power_of_two();
        let conv_fwd = planner.plan_fft_forward(conv_len);
        let conv_inv = planner.plan_fft_inverse(conv_len);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); conv_len];
        for (q, slot) in kernel_hat.iter_mut().take(kernel_len).enumerate() {
            let m = q as i64 - top as i64 + 1;
            if m % 2 != 0 {
                slot.re = 2.0 / m as f64;
            }
        }
        conv_fwd.process(&mut kernel_hat);
        Ok(Self {
            v_len,
            g_len,
            out_cutoff,
            grid_len,
            fwd,
            conv_fwd,
            conv_inv,
            kernel_hat,
        })
    }

    /// Collocation grid size `L`.
    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let two_l = 2 * self.grid_len;
        let mut z = vec![Complex64::new(0.0, 0.0); two_l];
        for (m, &a) in coeffs.iter().enumerate() {
            z[m + 1].re = a;
        }
        self.fwd.process(&mut z);
        // sum a_m exp(-i pi m i / L): imaginary part is -sum a_m sin(pi m i / L)
        z[..=self.grid_len].iter().map(|c| -SQRT_2 * c.im).collect()
    }

    pub fn apply(&self, v: &[f64], g: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.v_len);
        assert_eq!(g.len(), self.g_len);
        let l = self.grid_len;
        let vs = self.synthesize(v);
        let gs = self.synthesize(g);

        // cosine transform of the sampled product via its even extension
        let mut y = vec![Complex64::new(0.0, 0.0); 2 * l];
        for i in 0..=l {
            y[i].re = vs[i] * gs[i];
        }
        for i in 1..l {
            y[2 * l - i].re = y[i].re;
        }
        self.fwd.process(&mut y);
        let top = self.v_len + self.g_len;
        let cos_coeffs: Vec<f64> = (0..=top)
            .map(|j| {
                let w = if j == 0 || j == l { 0.5 } else { 1.0 };
                w * y[j].re / l as f64
            })
            .collect();

        // symmetric extension c~_{-j} = c_j, c~_0 = 2 c_0
        let n = self.kernel_hat.len();
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..=top {
            let val = if j == 0 { 2.0 * cos_coeffs[0] } else { cos_coeffs[j] };
            u[top + j].re = val;
            u[top - j].re = val;
        }
        self.conv_fwd.process(&mut u);
        for (a, b) in u.iter_mut().zip(&self.kernel_hat) {
            *a *= b;
        }
        self.conv_inv.process(&mut u);
        let scale = SQRT_2 / (2.0 * PI) / n as f64;
        (1..=self.out_cutoff)
            .map(|k| scale * u[k + 2 * top - 1].re)
            .collect()
    }
}

/// Approximate-path product; agrees with [`sine_expand_product`] to rounding
/// for band-limited inputs when `dealias_factor >= 2`.
pub fn fast_multiply(v: &[f64], g: &[f64], out_cutoff: usize, dealias_factor: f64) -> Result<Vec<f64>> {
    Ok(FastProduct::new(v.len(), g.len(), out_cutoff, dealias_factor)?.apply(v, g))
}
