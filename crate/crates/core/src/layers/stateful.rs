//! Parameter-owning wrappers around the functional layers.

use rand::Rng;

use super::{add_bias, appnp, gat, gcn, sgc, Activation, AppnpParams, GatOptions, GatParams, GcnParams, HeadMode};
use crate::error::Result;
use crate::graph::{Graph, NormConfig};
use crate::tensor::init::{glorot, glorot_shaped};
use crate::tensor::{Element, ParameterStore, Tape, Tensor, Var};

fn register_kernel<T: Element, R: Rng + ?Sized>(
    store: &mut ParameterStore<T>,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<()> {
    store.get_or_insert_with(name, &[fan_in, fan_out], || glorot(fan_in, fan_out, rng))
}

fn register_bias<T: Element>(store: &mut ParameterStore<T>, name: &str, len: usize) -> Result<()> {
    store.get_or_insert_with(name, &[len], || Tensor::zeros(vec![len]))
}

/// Fully connected layer `x · kernel + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub prefix: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub bias: bool,
}

impl Dense {
    pub fn build<T: Element, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let layer = Self {
            prefix: prefix.to_string(),
            in_dim,
            out_dim,
            bias,
        };
        register_kernel(store, &layer.kernel_name(), in_dim, out_dim, rng)?;
        if bias {
            register_bias(store, &layer.bias_name(), out_dim)?;
        }
        Ok(layer)
    }

    pub fn kernel_name(&self) -> String {
        format!("{}.kernel", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn params<'t, T: Element>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
    ) -> Result<(Var<'t, T>, Option<Var<'t, T>>)> {
        let kernel = tape.param(store, &self.kernel_name())?;
        let bias = self.bias.then(|| tape.param(store, &self.bias_name())).transpose()?;
        Ok((kernel, bias))
    }

    pub fn forward<'t, T: Element>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        x: &Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let (kernel, bias) = self.params(tape, store)?;
        add_bias(x.matmul(&kernel)?, bias.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub dense: Dense,
    pub activation: Option<Activation>,
    pub norm: NormConfig,
}

impl GcnLayer {
    pub fn build<T: Element, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Option<Activation>,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            dense: Dense::build(store, prefix, in_dim, out_dim, true, rng)?,
            activation,
            norm: NormConfig::default(),
        })
    }

    pub fn params<'t, T: Element>(&self, tape: &'t Tape<T>, store: &ParameterStore<T>) -> Result<GcnParams<'t, T>> {
        let (kernel, bias) = self.dense.params(tape, store)?;
        Ok(GcnParams { kernel, bias })
    }

    pub fn forward<'t, T: Element>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        x: &Var<'t, T>,
        graph: &Graph<T>,
    ) -> Result<Var<'t, T>> {
        gcn(x, graph, &self.params(tape, store)?, self.activation, self.norm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub prefix: String,
    pub in_dim: usize,
    pub head_dim: usize,
    pub heads: usize,
    pub head_mode: HeadMode,
    pub activation: Option<Activation>,
    pub attention_dropout: f64,
    pub leaky_slope: f64,
}

impl GatLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn build<T: Element, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        in_dim: usize,
        head_dim: usize,
        heads: usize,
        head_mode: HeadMode,
        activation: Option<Activation>,
        rng: &mut R,
    ) -> Result<Self> {
        let layer = Self {
            prefix: prefix.to_string(),
            in_dim,
            head_dim,
            heads,
            head_mode,
            activation,
            attention_dropout: 0.0,
            leaky_slope: 0.2,
        };
        let width = heads * head_dim;
        register_kernel(store, &layer.name("kernel"), in_dim, width, rng)?;
        for part in ["attn_self", "attn_neighbor"] {
            store.get_or_insert_with(&layer.name(part), &[heads, head_dim], || {
                glorot_shaped(&[heads, head_dim], heads, head_dim, rng)
            })?;
        }
        let bias_len = match head_mode {
            HeadMode::Concat => width,
            HeadMode::Average => head_dim,
        };
        register_bias(store, &layer.name("bias"), bias_len)?;
        Ok(layer)
    }

    pub fn with_attention_dropout(mut self, rate: f64) -> Self {
        self.attention_dropout = rate;
        self
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn output_dim(&self) -> usize {
        match self.head_mode {
            HeadMode::Concat => self.heads * self.head_dim,
            HeadMode::Average => self.head_dim,
        }
    }

    pub fn params<'t, T: Element>(&self, tape: &'t Tape<T>, store: &ParameterStore<T>) -> Result<GatParams<'t, T>> {
        Ok(GatParams {
            kernel: tape.param(store, &self.name("kernel"))?,
            attn_self: tape.param(store, &self.name("attn_self"))?,
            attn_neighbor: tape.param(store, &self.name("attn_neighbor"))?,
            bias: Some(tape.param(store, &self.name("bias"))?),
            heads: self.heads,
            leaky_slope: self.leaky_slope,
        })
    }

    pub fn forward<'t, T: Element, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        x: &Var<'t, T>,
        graph: &Graph<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        let options = GatOptions {
            head_mode: self.head_mode,
            activation: self.activation,
            attention_dropout: self.attention_dropout,
            training,
        };
        gat(x, graph, &self.params(tape, store)?, options, rng)
    }
}

/// `S^k · x · kernel + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcLayer {
    pub dense: Dense,
    pub k: usize,
    pub norm: NormConfig,
}

impl SgcLayer {
    pub fn build<T: Element, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            dense: Dense::build(store, prefix, in_dim, out_dim, true, rng)?,
            k,
            norm: NormConfig::default(),
        })
    }

    pub fn forward<'t, T: Element>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        x: &Var<'t, T>,
        graph: &Graph<T>,
    ) -> Result<Var<'t, T>> {
        let (kernel, bias) = self.dense.params(tape, store)?;
        add_bias(sgc(x, graph, &kernel, self.k, self.norm)?, bias.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppnpLayer {
    pub mlp: Vec<Dense>,
    pub alpha: f64,
    pub k: usize,
    pub dropout: f64,
    pub norm: NormConfig,
}

impl AppnpLayer {
    /// `dims` lists the MLP widths from input to output, so `dims.len() - 1`
    /// layers named `{prefix}{i}` are built.
    pub fn build<T: Element, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        prefix: &str,
        dims: &[usize],
        alpha: f64,
        k: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mlp = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::build(store, &format!("{prefix}{i}"), w[0], w[1], true, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            mlp,
            alpha,
            k,
            dropout,
            norm: NormConfig::default(),
        })
    }

    pub fn params<'t, T: Element>(&self, tape: &'t Tape<T>, store: &ParameterStore<T>) -> Result<AppnpParams<'t, T>> {
        Ok(AppnpParams {
            layers: self.mlp.iter().map(|d| d.params(tape, store)).collect::<Result<_>>()?,
            alpha: self.alpha,
            k: self.k,
        })
    }

    pub fn forward<'t, T: Element, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape<T>,
        store: &ParameterStore<T>,
        x: &Var<'t, T>,
        graph: &Graph<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var<'t, T>> {
        appnp(
            x,
            graph,
            &self.params(tape, store)?,
            self.dropout,
            training,
            rng,
            self.norm,
        )
    }
}
