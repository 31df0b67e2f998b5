//! Model configuration and the learnable parameter store.
//!
//! All tensors live in a flat, ordered [`ParamStore`]; the typed parameter
//! structs hold references into it. Binding a store to a fresh tape records
//! every parameter as a leaf in registration order, so a parameter's store
//! index and its tape node id always coincide — gradient extraction,
//! optimizer state and checkpointing all share that one ordering.

use crate::error::{Error, Result};
use crate::tensor_core::{GruNodes, HighwayNodes, NodeId, Tape, Tensor};
use crate::text_codec::Alphabet;

/// Hyperparameters of the encoder–decoder. The defaults are desk-scale;
/// every dimension is configurable.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub alphabet: Alphabet,
    /// Character embedding width (source and target tables).
    pub emb_dim: usize,
    /// Convolution window widths; one filter bank per width.
    pub conv_widths: Vec<usize>,
    /// Filters per bank.
    pub conv_filters: usize,
    /// Max-pooling stride that shortens the source before the recurrences.
    pub pool_stride: usize,
    /// Recurrent units per encoder direction.
    pub enc_hidden: usize,
    /// Recurrent units per decoder layer (two layers).
    pub dec_hidden: usize,
    /// Hidden width of the attention scoring network.
    pub att_hidden: usize,
}

impl ModelConfig {
    pub fn new(alphabet: Alphabet) -> Self {
        ModelConfig {
            alphabet,
            emb_dim: 32,
            conv_widths: vec![1, 2, 3, 4, 5],
            conv_filters: 25,
            pool_stride: 5,
            enc_hidden: 64,
            dec_hidden: 128,
            att_hidden: 64,
        }
    }

    /// Total convolution output channels (= encoder recurrence input width).
    pub fn conv_channels(&self) -> usize {
        self.conv_widths.len() * self.conv_filters
    }

    /// Width of one context vector: forward and backward states concatenated.
    pub fn context_dim(&self) -> usize {
        2 * self.enc_hidden
    }

    pub fn id_space(&self) -> usize {
        self.alphabet.id_space()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.emb_dim >= 1
            && !self.conv_widths.is_empty()
            && self.conv_widths.iter().all(|w| *w >= 1)
            && self.conv_filters >= 1
            && self.pool_stride >= 1
            && self.enc_hidden >= 1
            && self.dec_hidden >= 1
            && self.att_hidden >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract("degenerate model configuration".into()))
        }
    }
}

/// Index of one tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef(usize);

impl ParamRef {
    /// The tape node holding this parameter once the store is bound.
    fn node(self) -> NodeId {
        NodeId(self.0)
    }
}

/// Whether initialization treats a tensor as a weight (uniform init) or a
/// bias (zero init).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

struct ParamEntry {
    name: String,
    kind: ParamKind,
    tensor: Tensor,
}

/// Flat, ordered container of every learnable tensor.
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    fn register(&mut self, name: &str, shape: &[usize], kind: ParamKind) -> ParamRef {
        debug_assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter {name}"
        );
        self.entries.push(ParamEntry {
            name: name.to_string(),
            kind,
            tensor: Tensor::zeros(shape),
        });
        ParamRef(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.entries[i].name
    }

    pub fn kind(&self, i: usize) -> ParamKind {
        self.entries[i].kind
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].tensor
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].tensor
    }

    pub fn get(&self, r: ParamRef) -> &Tensor {
        &self.entries[r.0].tensor
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    /// Index of a parameter by name.
    pub fn find(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    /// Number of scalar values across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }
}

/// One gated recurrent unit's tensors (update gate, reset gate, candidate;
/// input and recurrent paths plus biases).
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_z: ParamRef,
    pub u_z: ParamRef,
    pub b_z: ParamRef,
    pub w_r: ParamRef,
    pub u_r: ParamRef,
    pub b_r: ParamRef,
    pub w_h: ParamRef,
    pub u_h: ParamRef,
    pub b_h: ParamRef,
}

impl GruParams {
    fn register(store: &mut ParamStore, prefix: &str, hidden: usize, input: usize) -> Self {
        let mut w = |n: &str, shape: &[usize], k| store.register(&format!("{prefix}.{n}"), shape, k);
        GruParams {
            w_z: w("w_z", &[hidden, input], ParamKind::Weight),
            u_z: w("u_z", &[hidden, hidden], ParamKind::Weight),
            b_z: w("b_z", &[hidden], ParamKind::Bias),
            w_r: w("w_r", &[hidden, input], ParamKind::Weight),
            u_r: w("u_r", &[hidden, hidden], ParamKind::Weight),
            b_r: w("b_r", &[hidden], ParamKind::Bias),
            w_h: w("w_h", &[hidden, input], ParamKind::Weight),
            u_h: w("u_h", &[hidden, hidden], ParamKind::Weight),
            b_h: w("b_h", &[hidden], ParamKind::Bias),
        }
    }

    fn bind(&self) -> GruNodes {
        GruNodes {
            w_z: self.w_z.node(),
            u_z: self.u_z.node(),
            b_z: self.b_z.node(),
            w_r: self.w_r.node(),
            u_r: self.u_r.node(),
            b_r: self.b_r.node(),
            w_h: self.w_h.node(),
            u_h: self.u_h.node(),
            b_h: self.b_h.node(),
        }
    }
}

/// One convolution filter bank (fixed window width).
#[derive(Debug, Clone, Copy)]
pub struct ConvBank {
    pub width: usize,
    pub weight: ParamRef,
    pub bias: ParamRef,
}

#[derive(Debug, Clone, Copy)]
pub struct HighwayParams {
    pub transform_w: ParamRef,
    pub transform_b: ParamRef,
    pub gate_w: ParamRef,
    pub gate_b: ParamRef,
}

impl HighwayParams {
    fn bind(&self) -> HighwayNodes {
        HighwayNodes {
            transform_w: self.transform_w.node(),
            transform_b: self.transform_b.node(),
            gate_w: self.gate_w.node(),
            gate_b: self.gate_b.node(),
        }
    }
}

/// Single-hidden-layer feedforward scoring network of the soft alignment.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    /// Projects one context vector into the scoring space.
    pub src_proj: ParamRef,
    /// Projects the previous top-layer decoder state.
    pub state_proj: ParamRef,
    pub hidden_bias: ParamRef,
    /// Reduces the scoring space to one scalar per source position.
    pub score_v: ParamRef,
}

/// Everything the encoder learns.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub embed: ParamRef,
    pub banks: Vec<ConvBank>,
    pub highway: HighwayParams,
    pub fwd: GruParams,
    pub bwd: GruParams,
}

/// Everything the decoder learns.
#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub embed: ParamRef,
    pub gru1: GruParams,
    pub gru2: GruParams,
    pub attention: AttentionParams,
    pub out_w: ParamRef,
    pub out_b: ParamRef,
}

/// The full set of learnable tensors plus the configuration they were
/// shaped by.
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl ModelParams {
    /// Allocate all tensors (zero-filled) for a configuration.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let v = config.id_space();
        let ch = config.conv_channels();

        let embed = store.register("encoder.embed", &[v, config.emb_dim], ParamKind::Weight);
        let banks = config
            .conv_widths
            .iter()
            .map(|&w| ConvBank {
                width: w,
                weight: store.register(
                    &format!("encoder.conv{w}.weight"),
                    &[config.conv_filters, w * config.emb_dim],
                    ParamKind::Weight,
                ),
                bias: store.register(
                    &format!("encoder.conv{w}.bias"),
                    &[config.conv_filters],
                    ParamKind::Bias,
                ),
            })
            .collect();
        let highway = HighwayParams {
            transform_w: store.register("encoder.highway.transform_w", &[ch, ch], ParamKind::Weight),
            transform_b: store.register("encoder.highway.transform_b", &[ch], ParamKind::Bias),
            gate_w: store.register("encoder.highway.gate_w", &[ch, ch], ParamKind::Weight),
            gate_b: store.register("encoder.highway.gate_b", &[ch], ParamKind::Bias),
        };
        let fwd = GruParams::register(&mut store, "encoder.fwd", config.enc_hidden, ch);
        let bwd = GruParams::register(&mut store, "encoder.bwd", config.enc_hidden, ch);
        let encoder = EncoderParams {
            embed,
            banks,
            highway,
            fwd,
            bwd,
        };

        let ctx = config.context_dim();
        let d_embed = store.register("decoder.embed", &[v, config.emb_dim], ParamKind::Weight);
        let gru1 = GruParams::register(
            &mut store,
            "decoder.gru1",
            config.dec_hidden,
            config.emb_dim + ctx,
        );
        let gru2 = GruParams::register(&mut store, "decoder.gru2", config.dec_hidden, config.dec_hidden);
        let attention = AttentionParams {
            src_proj: store.register(
                "decoder.attention.src_proj",
                &[config.att_hidden, ctx],
                ParamKind::Weight,
            ),
            state_proj: store.register(
                "decoder.attention.state_proj",
                &[config.att_hidden, config.dec_hidden],
                ParamKind::Weight,
            ),
            hidden_bias: store.register(
                "decoder.attention.hidden_bias",
                &[config.att_hidden],
                ParamKind::Bias,
            ),
            score_v: store.register(
                "decoder.attention.score_v",
                &[config.att_hidden],
                ParamKind::Weight,
            ),
        };
        let out_w = store.register("decoder.out_w", &[v, config.dec_hidden], ParamKind::Weight);
        let out_b = store.register("decoder.out_b", &[v], ParamKind::Bias);
        let decoder = DecoderParams {
            embed: d_embed,
            gru1,
            gru2,
            attention,
            out_w,
            out_b,
        };

        Ok(ModelParams {
            config,
            store,
            encoder,
            decoder,
        })
    }

    /// Record every parameter as a leaf on a fresh tape (in store order, so
    /// store indices equal node ids) and return the typed node handles.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        assert!(
            tape.is_empty(),
            "parameters must be the first nodes on a tape"
        );
        for i in 0..self.store.len() {
            tape.leaf(self.store.tensor(i).clone());
        }
        BoundModel {
            encoder: BoundEncoder {
                embed: self.encoder.embed.node(),
                banks: self
                    .encoder
                    .banks
                    .iter()
                    .map(|b| (b.width, b.weight.node(), b.bias.node()))
                    .collect(),
                highway: self.encoder.highway.bind(),
                fwd: self.encoder.fwd.bind(),
                bwd: self.encoder.bwd.bind(),
            },
            decoder: BoundDecoder {
                embed: self.decoder.embed.node(),
                gru1: self.decoder.gru1.bind(),
                gru2: self.decoder.gru2.bind(),
                attention: AttentionNodes {
                    src_proj: self.decoder.attention.src_proj.node(),
                    state_proj: self.decoder.attention.state_proj.node(),
                    hidden_bias: self.decoder.attention.hidden_bias.node(),
                    score_v: self.decoder.attention.score_v.node(),
                },
                out_w: self.decoder.out_w.node(),
                out_b: self.decoder.out_b.node(),
            },
        }
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }
}

/// Attention parameters as tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub src_proj: NodeId,
    pub state_proj: NodeId,
    pub hidden_bias: NodeId,
    pub score_v: NodeId,
}

pub struct BoundEncoder {
    pub embed: NodeId,
    pub banks: Vec<(usize, NodeId, NodeId)>,
    pub highway: HighwayNodes,
    pub fwd: GruNodes,
    pub bwd: GruNodes,
}

pub struct BoundDecoder {
    pub embed: NodeId,
    pub gru1: GruNodes,
    pub gru2: GruNodes,
    pub attention: AttentionNodes,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

/// All parameters of one model bound to a tape.
pub struct BoundModel {
    pub encoder: BoundEncoder,
    pub decoder: BoundDecoder,
}
