use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::layers::{self, GraphEdges};
use super::prompt::build_prompt;
use super::{ModelConfig, ModelError, Vocab};
use crate::kg::{init_node_embeddings, Provenance, QuerySubgraph, INTERACTION_RELATION, SELF_RELATION};
use crate::rng::keyed_rng;
use crate::tensor::{Array, Bound, ParamStore, Tape, TensorError, Var};

const EMBED_STD: f64 = 0.1;
const SMALL_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// `N(0, 2 / (fan_in + fan_out))`
    Xavier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: [usize; 2],
    pub init: Init,
}

fn spec(out: &mut Vec<ParamSpec>, name: String, rows: usize, cols: usize, init: Init) {
    out.push(ParamSpec {
        name,
        shape: [rows, cols],
        init,
    });
}

fn ln_specs(out: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    spec(out, format!("{prefix}.g"), 1, d, Init::Ones);
    spec(out, format!("{prefix}.b"), 1, d, Init::Zeros);
}

fn ff_specs(out: &mut Vec<ParamSpec>, prefix: &str, d: usize, wide: usize) {
    spec(out, format!("{prefix}.w1"), d, wide, Init::Xavier);
    spec(out, format!("{prefix}.b1"), 1, wide, Init::Zeros);
    spec(out, format!("{prefix}.w2"), wide, d, Init::Xavier);
    spec(out, format!("{prefix}.b2"), 1, d, Init::Zeros);
}

fn attn_specs(out: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    for w in ["wq", "wk", "wv", "wo"] {
        spec(out, format!("{prefix}.{w}"), d, d, Init::Xavier);
    }
}

/// Every parameter of a model with this configuration.
pub fn param_specs(config: &ModelConfig, vocab_len: usize, num_relations: usize) -> Vec<ParamSpec> {
    let dl = config.d_text;
    let dg = config.d_graph;
    let dz = config.d_bottleneck;
    let mut out = Vec::new();
    spec(&mut out, "embed.tok".into(), vocab_len, dl, Init::Normal(EMBED_STD));
    spec(
        &mut out,
        "embed.pos".into(),
        config.max_len,
        dl,
        Init::Normal(EMBED_STD),
    );
    for l in 0..config.total_layers() {
        let pre = format!("text.{l}");
        ln_specs(&mut out, &format!("{pre}.ln1"), dl);
        attn_specs(&mut out, &format!("{pre}.attn"), dl);
        ln_specs(&mut out, &format!("{pre}.ln2"), dl);
        ff_specs(&mut out, &format!("{pre}.ff"), dl, config.ff_mult * dl);
    }
    ln_specs(&mut out, "enc_ln", dl);
    spec(&mut out, "graph.int".into(), 1, dg, Init::Normal(SMALL_STD));
    spec(
        &mut out,
        "graph.type".into(),
        Provenance::ALL.len(),
        dg,
        Init::Normal(SMALL_STD),
    );
    for s in 0..config.fused_layers {
        let pre = format!("gnn.{s}");
        for w in ["wq", "wk", "wv", "wo"] {
            spec(&mut out, format!("{pre}.{w}"), dg, dg, Init::Xavier);
        }
        spec(
            &mut out,
            format!("{pre}.rel"),
            num_relations,
            dg,
            Init::Normal(SMALL_STD),
        );
        ff_specs(&mut out, &format!("{pre}.ff"), dg, config.ff_mult * dg);

        let pre = format!("fuse.{s}");
        spec(&mut out, format!("{pre}.f1.w"), dl + dg, config.d_proj, Init::Xavier);
        spec(&mut out, format!("{pre}.f1.b"), 1, config.d_proj, Init::Zeros);
        spec(&mut out, format!("{pre}.f2.w"), config.d_proj, 2 * dz, Init::Xavier);
        spec(&mut out, format!("{pre}.f2.b"), 1, 2 * dz, Init::Zeros);
        spec(&mut out, format!("{pre}.wh"), dz / 2, dl, Init::Xavier);
        spec(&mut out, format!("{pre}.wu"), dz / 2, dg, Init::Xavier);
    }
    spec(&mut out, "dec.start".into(), 1, dl, Init::Normal(EMBED_STD));
    for ln in ["dec.ln1", "dec.ln2", "dec.ln3", "dec.ln_out"] {
        ln_specs(&mut out, ln, dl);
    }
    attn_specs(&mut out, "dec.self", dl);
    attn_specs(&mut out, "dec.cross", dl);
    ff_specs(&mut out, "dec.ff", dl, config.ff_mult * dl);
    spec(&mut out, "dec.out.w".into(), dl, 2, Init::Xavier);
    spec(&mut out, "dec.out.b".into(), 1, 2, Init::Zeros);
    out
}

fn init_array(spec: &ParamSpec, seed: u64) -> Array {
    let [r, c] = spec.shape;
    let std = match spec.init {
        Init::Zeros => return Array::zeros(&[r, c]),
        Init::Ones => return Array::filled(&[r, c], 1.0),
        Init::Normal(s) => s,
        Init::Xavier => (2.0 / (r + c) as f64).sqrt(),
    };
    let mut rng = keyed_rng(&spec.name, seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    let data = (0..r * c).map(|_| normal.sample(&mut rng)).collect();
    Array::matrix(r, c, data).expect("spec shape")
}

/// Per-layer bottleneck noise `eps`, one `1 x d_z` row per fused layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub eps: Vec<Array>,
}

impl Noise {
    /// Inference: `z = mu`.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            eps: vec![Array::zeros(&[1, config.d_bottleneck]); config.fused_layers],
        }
    }

    pub fn standard<R: Rng>(config: &ModelConfig, rng: &mut R) -> Self {
        let eps = (0..config.fused_layers)
            .map(|_| {
                let v = (0..config.d_bottleneck).map(|_| rng.sample(StandardNormal)).collect();
                Array::row_vector(v)
            })
            .collect();
        Self { eps }
    }
}

/// Everything needed to run one (query, document) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub tokens: Vec<usize>,
    pub node_init: Array,
    pub provenance: Vec<usize>,
    pub edges: GraphEdges,
}

/// Vars of one forward pass, for losses and inspection.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// `1 x 2` logits of (`<true>`, `<false>`).
    pub logits: Var,
    /// `logit_true - logit_false`.
    pub logit_diff: Var,
    pub kl: Vec<Var>,
    pub text_attention: Vec<Vec<Var>>,
    pub graph_attention: Vec<Var>,
    pub cross_attention: Vec<Var>,
    pub encoder_out: Var,
    pub nodes_out: Var,
}

impl ForwardVars {
    /// `-ln p(label)`, computed as a softplus of the logit difference.
    pub fn nll(&self, tape: &mut Tape, label: bool) -> Result<Var, TensorError> {
        let d = if label {
            tape.neg(self.logit_diff)?
        } else {
            self.logit_diff
        };
        tape.softplus(d)
    }

    pub fn trace(&self, tape: &Tape) -> ForwardTrace {
        let logits = tape.value(self.logits).data();
        let (lt, lf) = (logits[0], logits[1]);
        let m = lt.max(lf);
        let (et, ef) = ((lt - m).exp(), (lf - m).exp());
        ForwardTrace {
            score: et / (et + ef),
            logit_diff: tape.value(self.logit_diff).data()[0],
            kl_terms: self.kl.iter().map(|v| tape.value(*v).data()[0]).collect(),
            text_attention: self
                .text_attention
                .iter()
                .map(|l| l.iter().map(|v| tape.value(*v).clone()).collect())
                .collect(),
            graph_attention: self.graph_attention.iter().map(|v| tape.value(*v).clone()).collect(),
            cross_attention: self.cross_attention.iter().map(|v| tape.value(*v).clone()).collect(),
        }
    }
}

/// Plain values of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `p(<true>)` over the two answer tokens.
    pub score: f64,
    pub logit_diff: f64,
    /// One KL value per fused layer, in layer order.
    pub kl_terms: Vec<f64>,
    /// Per text layer, per head: `N x N` weights.
    pub text_attention: Vec<Vec<Array>>,
    /// Per fused layer: weights per edge (self-loops last), `E x 1`.
    pub graph_attention: Vec<Array>,
    /// Per head: `1 x N` decoder weights over the encoder output.
    pub cross_attention: Vec<Array>,
}

/// Encoder-decoder relevance model with graph fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub(crate) config: ModelConfig,
    pub(crate) vocab: Vocab,
    /// `[interaction, self, kg relations sorted]`
    pub(crate) relations: Vec<String>,
    pub(crate) params: ParamStore,
}

impl RankerModel {
    /// Fresh model; `kg_relations` is the relation set of the graph it will see.
    pub fn new(config: ModelConfig, vocab: Vocab, kg_relations: &[String], seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut kg: Vec<String> = kg_relations.to_vec();
        kg.sort();
        kg.dedup();
        let mut relations = vec![INTERACTION_RELATION.to_string(), SELF_RELATION.to_string()];
        for r in kg {
            if relations.contains(&r) {
                return Err(ModelError::Config(format!("relation `{r}` is reserved")));
            }
            relations.push(r);
        }
        let mut params = ParamStore::new();
        for s in param_specs(&config, vocab.len(), relations.len()) {
            let a = init_array(&s, seed);
            params.insert(s.name, a);
        }
        Ok(Self {
            config,
            vocab,
            relations,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamStore) {
        self.params = params;
    }

    /// Tokenize, and turn the subgraph into tensors and relation ids.
    ///
    /// In text-only mode the subgraph is replaced by the bare interaction node.
    pub fn prepare(&self, query: &str, doc: &str, subgraph: &QuerySubgraph) -> Result<PairInput, ModelError> {
        let tokens = build_prompt(query, doc, &self.vocab, self.config.max_len)?;
        let empty;
        let sg = if self.config.text_only {
            empty = QuerySubgraph::empty();
            &empty
        } else {
            subgraph
        };
        let node_init = init_node_embeddings(sg, self.config.d_graph, self.config.node_seed)?;
        let provenance = sg.nodes.iter().map(|n| n.provenance.index()).collect();
        let n = sg.num_nodes();
        let mut edges = GraphEdges::default();
        for e in &sg.edges {
            let r = self
                .relations
                .iter()
                .position(|x| *x == e.relation)
                .ok_or_else(|| ModelError::UnknownRelation(e.relation.clone()))?;
            if e.source >= n || e.target >= n {
                return Err(ModelError::Config(format!(
                    "edge {}->{} outside a {n}-node subgraph",
                    e.source, e.target
                )));
            }
            edges.source.push(e.source);
            edges.target.push(e.target);
            edges.relation.push(r);
        }
        for i in 0..n {
            edges.source.push(i);
            edges.target.push(i);
            edges.relation.push(1);
        }
        Ok(PairInput {
            tokens,
            node_init,
            provenance,
            edges,
        })
    }

    /// Record a full forward pass on `tape` with parameters from `bound`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        input: &PairInput,
        noise: &Noise,
    ) -> Result<ForwardVars, ModelError> {
        let c = &self.config;
        if noise.eps.len() != c.fused_layers || noise.eps.iter().any(|e| e.shape() != [1, c.d_bottleneck]) {
            return Err(ModelError::Noise {
                expected: c.fused_layers,
                width: c.d_bottleneck,
            });
        }
        let n_tok = input.tokens.len();
        let tok = tape.embedding(bound.get("embed.tok")?, &input.tokens)?;
        let pos = tape.slice_rows(bound.get("embed.pos")?, 0, n_tok)?;
        let mut h = tape.add(tok, pos)?;

        let n_nodes = input.node_init.rows();
        let init = tape.constant(input.node_init.clone())?;
        let types = tape.embedding(bound.get("graph.type")?, &input.provenance)?;
        let int = tape.scatter_add_rows(bound.get("graph.int")?, &[0], n_nodes)?;
        let u = tape.add(init, types)?;
        let mut u = tape.add(u, int)?;

        let mut text_attention = Vec::with_capacity(c.total_layers());
        let mut graph_attention = Vec::with_capacity(c.fused_layers);
        let mut kl = Vec::with_capacity(c.fused_layers);
        for l in 0..c.total_layers() {
            let (h_next, w) = layers::text_layer(tape, bound, &format!("text.{l}"), h, c.heads)?;
            h = h_next;
            text_attention.push(w);
            if l < c.text_layers {
                continue;
            }
            let s = l - c.text_layers;
            let (u_next, a) = layers::gnn_layer(tape, bound, &format!("gnn.{s}"), u, &input.edges)?;
            graph_attention.push(a);
            let h_int = tape.slice_rows(h, 0, 1)?;
            let u_int = tape.slice_rows(u_next, 0, 1)?;
            let f = layers::fuse_interaction(tape, bound, &format!("fuse.{s}"), h_int, u_int, &noise.eps[s])?;
            h = layers::replace_first_row(tape, h, f.h)?;
            u = layers::replace_first_row(tape, u_next, f.u)?;
            kl.push(f.kl);
        }
        let memory = layers::layer_norm(tape, bound, "enc_ln", h)?;
        let (logits, cross_attention) = layers::decode(tape, bound, bound.get("dec.start")?, memory, c.heads)?;
        let lt = tape.slice_cols(logits, 0, 1)?;
        let lf = tape.slice_cols(logits, 1, 1)?;
        let logit_diff = tape.sub(lt, lf)?;
        Ok(ForwardVars {
            logits,
            logit_diff,
            kl,
            text_attention,
            graph_attention,
            cross_attention,
            encoder_out: memory,
            nodes_out: u,
        })
    }

    /// Forward pass with the model's own parameters.
    pub fn run(&self, input: &PairInput, noise: &Noise) -> Result<ForwardTrace, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let vars = self.forward(&mut tape, &bound, input, noise)?;
        Ok(vars.trace(&tape))
    }

    /// Inference score (`eps = 0`).
    pub fn score(&self, input: &PairInput) -> Result<ForwardTrace, ModelError> {
        self.run(input, &Noise::zeros(&self.config))
    }
}
