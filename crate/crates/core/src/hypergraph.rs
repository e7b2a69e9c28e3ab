//! Hypergraph convolution over spatial feature maps.
//!
//! Each pixel of an `h × w` feature map is a vertex. The incidence matrix is
//! predicted from the features themselves,
//!
//! ```text
//! H = | Ψ(X) Λ(X) Ψ(X)ᵀ Ω(X) |
//! ```
//!
//! where Ψ is a 1×1 embedding with ReLU, Λ a per-image diagonal obtained from
//! the pooled embedding, and Ω an `s × s` convolution with one output channel
//! per hyperedge. Features are then propagated with
//! `P = D^{-1/2} H W B^{-1} Hᵀ D^{-1/2}` (hyperedge weights `W = I`) and
//! mixed by a learnable `Θ`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::init::kaiming_uniform;
use crate::kernels::Padding;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphConfig {
    pub channels: usize,
    pub out_channels: usize,
    /// Number of hyperedges `M`.
    pub edges: usize,
    /// Embedding width `Ĉ`.
    pub embed: usize,
    /// Ω window size `s`; odd.
    pub window: usize,
    /// Floor applied to vertex and hyperedge degrees before inversion.
    pub epsilon: f64,
}

impl HypergraphConfig {
    /// Defaults for a layer over `nodes` vertices: `Ĉ = max(C/4, 8)`, `M = ⌈N/4⌉`.
    pub fn with_defaults(channels: usize, out_channels: usize, nodes: usize) -> Self {
        HypergraphConfig {
            channels,
            out_channels,
            edges: nodes.div_ceil(4).max(1),
            embed: (channels / 4).max(8),
            window: DEFAULT_WINDOW,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("hypergraph config: {m}")));
        if self.window % 2 == 0 {
            return bad("window size must be odd");
        }
        if self.edges == 0 || self.embed == 0 || self.channels == 0 || self.out_channels == 0 {
            return bad("edges, embedding width and channels must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

/// Numeric incidence data for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceFactors {
    pub psi: Option<Tensor>,
    pub lambda_diag: Option<Tensor>,
    pub omega: Option<Tensor>,
    /// Rectified incidence `[N, M]`.
    pub h: Tensor,
    /// Vertex degrees `[N]` before regularization.
    pub d_diag: Tensor,
    /// Hyperedge degrees `[M]` before regularization.
    pub b_diag: Tensor,
    pub epsilon: f64,
}

fn degrees(h: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, m) = h.dims2()?;
    let hd = h.data();
    let d: Vec<f64> = (0..n)
        .map(|i| hd[i * m..(i + 1) * m].iter().fold(0.0, |a, &v| a + v))
        .collect();
    let mut b = vec![0.0; m];
    for row in hd.chunks_exact(m) {
        for (o, &v) in b.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok((Tensor::new(&[n], d)?, Tensor::new(&[m], b)?))
}

impl IncidenceFactors {
    /// Factors of a given incidence matrix (no learned components).
    pub fn from_incidence(h: Tensor, epsilon: f64) -> Result<Self> {
        let (d_diag, b_diag) = degrees(&h)?;
        Ok(IncidenceFactors {
            psi: None,
            lambda_diag: None,
            omega: None,
            h,
            d_diag,
            b_diag,
            epsilon,
        })
    }

    /// `H = |Ψ diag(λ) Ψᵀ Ω|` from explicit factors.
    pub fn from_factors(psi: Tensor, lambda_diag: Tensor, omega: Tensor, epsilon: f64) -> Result<Self> {
        let (n, c) = psi.dims2()?;
        if lambda_diag.shape() != [c] {
            return Err(Error::shape("incidence lambda", psi.shape(), lambda_diag.shape()));
        }
        if omega.dims2()?.0 != n {
            return Err(Error::shape("incidence omega", psi.shape(), omega.shape()));
        }
        let mut scaled = psi.clone();
        for row in scaled.data_mut().chunks_exact_mut(c) {
            for (v, &l) in row.iter_mut().zip(lambda_diag.data()) {
                *v *= l;
            }
        }
        let inner = psi.transpose2()?.matmul(&omega)?;
        let h = scaled.matmul(&inner)?.map(f64::abs);
        let mut f = Self::from_incidence(h, epsilon)?;
        f.psi = Some(psi);
        f.lambda_diag = Some(lambda_diag);
        f.omega = Some(omega);
        Ok(f)
    }

    pub fn nodes(&self) -> usize {
        self.h.shape()[0]
    }
}

/// The propagation operator `P = D^{-1/2} H B^{-1} Hᵀ D^{-1/2}` with degrees
/// floored at `epsilon`.
pub fn propagation_matrix(f: &IncidenceFactors) -> Result<Tensor> {
    let (n, m) = f.h.dims2()?;
    let floor = |v: f64| v.max(f.epsilon);
    let d_inv_sqrt: Vec<f64> = f.d_diag.data().iter().map(|&d| floor(d).powf(-0.5)).collect();
    let b_inv: Vec<f64> = f.b_diag.data().iter().map(|&b| floor(b).powf(-1.0)).collect();
    if d_inv_sqrt.iter().chain(&b_inv).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regularized hypergraph degrees".into()));
    }
    let hd = f.h.data();
    let left = Tensor::from_fn(&[n, m], |k| hd[k] * d_inv_sqrt[k / m]);
    let weighted = Tensor::from_fn(&[n, m], |k| left.data()[k] * b_inv[k % m]);
    weighted.matmul(&left.transpose2()?)
}

/// The normalized hypergraph Laplacian `Δ = I − P`.
pub fn laplacian(f: &IncidenceFactors) -> Result<Tensor> {
    let p = propagation_matrix(f)?;
    let n = f.nodes();
    Ok(Tensor::from_fn(&[n, n], |k| {
        let eye = if k / n == k % n { 1.0 } else { 0.0 };
        eye - p.data()[k]
    }))
}

/// Reference propagation `D^{-1/2} H B^{-1} Hᵀ D^{-1/2} X` for a binary
/// incidence matrix, written as explicit sums.
pub fn spectral_oracle(h: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (n, m) = h.dims2()?;
    let (xn, c) = x.dims2()?;
    if xn != n {
        return Err(Error::shape("spectral_oracle", h.shape(), x.shape()));
    }
    let hv = |i: usize, e: usize| h.data()[i * m + e];
    if h.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Hypergraph("incidence must be binary".into()));
    }
    let mut deg_v = vec![0.0; n];
    let mut deg_e = vec![0.0; m];
    for i in 0..n {
        for e in 0..m {
            deg_v[i] += hv(i, e);
            deg_e[e] += hv(i, e);
        }
    }
    if let Some(i) = deg_v.iter().position(|&d| d == 0.0) {
        return Err(Error::Hypergraph(format!("vertex {i} is isolated")));
    }
    if let Some(e) = deg_e.iter().position(|&d| d == 0.0) {
        return Err(Error::Hypergraph(format!("hyperedge {e} is empty")));
    }
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        for j in 0..n {
            let mut pij = 0.0;
            for e in 0..m {
                pij += hv(i, e) * hv(j, e) / deg_e[e];
            }
            pij /= (deg_v[i] * deg_v[j]).sqrt();
            for k in 0..c {
                out[i * c + k] += pij * x.data()[j * c + k];
            }
        }
    }
    Tensor::new(&[n, c], out)
}

/// Tape handles for one image's incidence construction.
#[derive(Debug, Clone, Copy)]
pub struct IncidenceVars {
    pub psi: Var,
    pub lambda: Var,
    pub omega: Var,
    pub h: Var,
    pub d: Var,
    pub b: Var,
    pub p: Var,
}

impl IncidenceVars {
    pub fn factors(&self, tape: &Tape, epsilon: f64) -> IncidenceFactors {
        IncidenceFactors {
            psi: Some(tape.value(self.psi).clone()),
            lambda_diag: Some(tape.value(self.lambda).clone()),
            omega: Some(tape.value(self.omega).clone()),
            h: tape.value(self.h).clone(),
            d_diag: tape.value(self.d).clone(),
            b_diag: tape.value(self.b).clone(),
            epsilon,
        }
    }
}

/// Records `P` for incidence `h` on the tape; returns `(D, B, P)`.
pub fn propagate_on_tape(tape: &mut Tape, h: Var, epsilon: f64) -> Result<(Var, Var, Var)> {
    let d = tape.sum_last(h)?;
    let b = tape.sum_first(h)?;
    let d_reg = tape.clamp_min(d, epsilon);
    let b_reg = tape.clamp_min(b, epsilon);
    let d_inv_sqrt = tape.powf(d_reg, -0.5);
    let b_inv = tape.powf(b_reg, -1.0);
    let left = tape.scale_rows(h, d_inv_sqrt)?;
    let weighted = tape.mul_channel(left, b_inv)?;
    let right = tape.transpose(left)?;
    let p = tape.matmul(weighted, right)?;
    Ok((d, b, p))
}

#[derive(Debug, Clone)]
pub struct HypergraphLayer {
    pub config: HypergraphConfig,
    pub activation: Activation,
    pub w_psi: ParamId,
    pub b_psi: ParamId,
    pub w_lambda: ParamId,
    pub b_lambda: ParamId,
    pub w_omega: ParamId,
    pub b_omega: ParamId,
    pub theta: ParamId,
}

impl HypergraphLayer {
    /// Registers the layer's parameters under `prefix` with Kaiming-uniform kernels and zero biases.
    pub fn new(store: &mut ParamStore, prefix: &str, config: HypergraphConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (c, e, m, s) = (config.channels, config.embed, config.edges, config.window);
        let mut add = |name: &str, t: Tensor| store.add(format!("{prefix}.{name}"), t);
        Ok(HypergraphLayer {
            w_psi: add("psi.weight", kaiming_uniform(&[1, 1, c, e], c, rng))?,
            b_psi: add("psi.bias", Tensor::zeros(&[e]))?,
            w_lambda: add("lambda.weight", kaiming_uniform(&[1, 1, e, e], e, rng))?,
            b_lambda: add("lambda.bias", Tensor::zeros(&[e]))?,
            w_omega: add("omega.weight", kaiming_uniform(&[s, s, c, m], s * s * c, rng))?,
            b_omega: add("omega.bias", Tensor::zeros(&[m]))?,
            theta: add("theta", kaiming_uniform(&[c, config.out_channels], c, rng))?,
            activation: Activation::Elu,
            config,
        })
    }

    fn check_input(&self, tape: &Tape, x: Var) -> Result<(usize, usize, usize, usize)> {
        let dims = tape.value(x).dims4()?;
        if dims.3 != self.config.channels {
            return Err(Error::shape(
                "hypergraph input channels",
                tape.shape(x),
                &[self.config.channels],
            ));
        }
        Ok(dims)
    }

    /// Incidence construction for one image `x: [1, h, w, C]`.
    pub fn incidence_item(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<IncidenceVars> {
        let (_, h, w, _) = self.check_input(tape, x)?;
        let n = h * w;
        let cfg = &self.config;
        let w_psi = tape.param(store, self.w_psi);
        let b_psi = tape.param(store, self.b_psi);
        let w_lambda = tape.param(store, self.w_lambda);
        let b_lambda = tape.param(store, self.b_lambda);
        let w_omega = tape.param(store, self.w_omega);
        let b_omega = tape.param(store, self.b_omega);

        let embedded = tape.conv2d(x, w_psi, Some(b_psi), 1, 1, Padding::Same)?;
        let embedded = tape.relu(embedded);
        let psi = tape.reshape(embedded, &[n, cfg.embed])?;

        let pooled = tape.global_avg_pool(embedded)?;
        let lambda = tape.conv2d(pooled, w_lambda, Some(b_lambda), 1, 1, Padding::Same)?;
        let lambda = tape.reshape(lambda, &[cfg.embed])?;

        let omega = tape.conv2d(x, w_omega, Some(b_omega), 1, 1, Padding::Same)?;
        let omega = tape.reshape(omega, &[n, cfg.edges])?;

        let scaled = tape.mul_channel(psi, lambda)?;
        let psi_t = tape.transpose(psi)?;
        let inner = tape.matmul(psi_t, omega)?;
        let raw = tape.matmul(scaled, inner)?;
        let h_var = tape.abs(raw);
        let (d, b, p) = propagate_on_tape(tape, h_var, cfg.epsilon)?;
        Ok(IncidenceVars {
            psi,
            lambda,
            omega,
            h: h_var,
            d,
            b,
            p,
        })
    }

    /// Learned incidence for every image in the batch.
    pub fn build_incidence(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Vec<IncidenceVars>> {
        let (batch, ..) = self.check_input(tape, x)?;
        (0..batch)
            .map(|i| {
                let xi = tape.batch_item(x, i)?;
                self.incidence_item(tape, store, xi)
            })
            .collect()
    }

    fn mix(&self, tape: &mut Tape, store: &ParamStore, xi: Var, p: Var) -> Result<Var> {
        let (_, h, w, c) = tape.value(xi).dims4()?;
        let theta = tape.param(store, self.theta);
        let nodes = tape.reshape(xi, &[h * w, c])?;
        let projected = tape.matmul(nodes, theta)?;
        let mixed = tape.matmul(p, projected)?;
        let act = match self.activation {
            Activation::Elu => tape.elu(mixed),
            Activation::Identity => mixed,
        };
        tape.reshape(act, &[1, h, w, self.config.out_channels])
    }

    /// `σ(P X Θ)` per image with the learned incidence.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (batch, ..) = self.check_input(tape, x)?;
        let outs = (0..batch)
            .map(|i| {
                let xi = tape.batch_item(x, i)?;
                let inc = self.incidence_item(tape, store, xi)?;
                self.mix(tape, store, xi, inc.p)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.stack_batch(&outs)
    }

    /// `σ(P X Θ)` with a caller-supplied incidence matrix per image.
    pub fn forward_with_incidence(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        incidence: &[Tensor],
    ) -> Result<Var> {
        let (batch, h, w, _) = self.check_input(tape, x)?;
        if incidence.len() != batch {
            return Err(Error::InvalidArgument(format!(
                "{} incidence matrices for batch of {batch}",
                incidence.len()
            )));
        }
        let outs = incidence
            .iter()
            .enumerate()
            .map(|(i, hm)| {
                if hm.dims2()?.0 != h * w {
                    return Err(Error::shape("injected incidence", hm.shape(), &[h * w]));
                }
                let xi = tape.batch_item(x, i)?;
                let hv = tape.constant(hm.clone());
                let (_, _, p) = propagate_on_tape(tape, hv, self.config.epsilon)?;
                self.mix(tape, store, xi, p)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.stack_batch(&outs)
    }
}
