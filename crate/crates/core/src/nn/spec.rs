use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_dim: usize,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// Two hidden ReLU layers of 60 units over the flattened 10x3 history.
    pub fn student() -> Self {
        MlpSpec {
            input_dim: 30,
            hidden: vec![60, 60],
            hidden_activation: Activation::Relu,
            output_dim: 1,
            output_activation: Activation::Sigmoid,
        }
    }

    pub(crate) fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmSpec {
    pub input_channels: usize,
    pub seq_len: usize,
    /// Units per stacked layer, bottom first.
    pub layers: Vec<usize>,
    /// Inverted dropout on the inputs of every layer above the first.
    pub dropout: f64,
    /// Optional ReLU dense layer between the top LSTM layer and the head.
    pub projection: Option<usize>,
    pub head_activation: Activation,
}

impl LstmSpec {
    /// Stacked 475/61-unit LSTM with 0.3 inter-layer dropout and a sigmoid head.
    pub fn teacher() -> Self {
        LstmSpec {
            input_channels: 3,
            seq_len: 10,
            layers: vec![475, 61],
            dropout: 0.3,
            projection: None,
            head_activation: Activation::Sigmoid,
        }
    }

    pub(crate) fn layer_inputs(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_channels
        } else {
            self.layers[layer - 1]
        }
    }

    pub(crate) fn top_units(&self) -> usize {
        *self.layers.last().expect("validated spec has layers")
    }

    pub(crate) fn head_inputs(&self) -> usize {
        self.projection.unwrap_or_else(|| self.top_units())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSpec {
    Mlp(MlpSpec),
    Lstm(LstmSpec),
}

/// A named 2-D parameter block inside the flat vector (biases are `1 x n`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            NetworkSpec::Mlp(m) => {
                if m.dims().contains(&0) {
                    return Err(Error::Config(format!("MLP dimensions must be >= 1: {:?}", m.dims())));
                }
            }
            NetworkSpec::Lstm(l) => {
                if l.input_channels == 0 || l.seq_len == 0 || l.layers.is_empty() || l.layers.contains(&0) {
                    return Err(Error::Config(format!(
                        "LSTM needs channels, sequence length and at least one non-empty layer: {l:?}"
                    )));
                }
                if l.projection == Some(0) {
                    return Err(Error::Config("projection width must be >= 1".into()));
                }
                if !(0.0..1.0).contains(&l.dropout) {
                    return Err(Error::Config(format!("dropout {} outside [0, 1)", l.dropout)));
                }
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        match self {
            NetworkSpec::Mlp(m) => m.input_dim,
            NetworkSpec::Lstm(l) => l.seq_len * l.input_channels,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            NetworkSpec::Mlp(m) => m.output_dim,
            NetworkSpec::Lstm(_) => 1,
        }
    }

    pub fn layout(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            blocks.push(ParamBlock { name, rows, cols, offset });
            offset += rows * cols;
        };
        match self {
            NetworkSpec::Mlp(m) => {
                for (i, w) in m.dims().windows(2).enumerate() {
                    push(format!("dense{i}.kernel"), w[0], w[1]);
                    push(format!("dense{i}.bias"), 1, w[1]);
                }
            }
            NetworkSpec::Lstm(l) => {
                for (i, &u) in l.layers.iter().enumerate() {
                    push(format!("lstm{i}.kernel"), l.layer_inputs(i), 4 * u);
                    push(format!("lstm{i}.recurrent"), u, 4 * u);
                    push(format!("lstm{i}.bias"), 1, 4 * u);
                }
                if let Some(p) = l.projection {
                    push("proj.kernel".into(), l.top_units(), p);
                    push("proj.bias".into(), 1, p);
                }
                push("head.kernel".into(), l.head_inputs(), 1);
                push("head.bias".into(), 1, 1);
            }
        }
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(ParamBlock::len).sum()
    }

    /// Multiply–adds for one inference sample: `in * out` per dense layer,
    /// `4 * u * (in + u)` per LSTM cell per step.
    pub fn multiply_adds(&self) -> u64 {
        match self {
            NetworkSpec::Mlp(m) => m.dims().windows(2).map(|w| (w[0] * w[1]) as u64).sum(),
            NetworkSpec::Lstm(l) => {
                let cells: u64 = l
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| (4 * u * (l.layer_inputs(i) + u)) as u64)
                    .sum();
                let proj = l.projection.map_or(0, |p| (l.top_units() * p) as u64);
                cells * l.seq_len as u64 + proj + l.head_inputs() as u64
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NetworkSpec::Mlp(_) => "mlp",
            NetworkSpec::Lstm(_) => "lstm",
        }
    }

    /// Text descriptor stored in weight files.
    pub fn descriptor(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "kind={}", self.kind());
        match self {
            NetworkSpec::Mlp(m) => {
                let _ = writeln!(s, "input_dim={}", m.input_dim);
                let _ = writeln!(s, "hidden={}", list(&m.hidden));
                let _ = writeln!(s, "hidden_activation={}", m.hidden_activation.name());
                let _ = writeln!(s, "output_dim={}", m.output_dim);
                let _ = writeln!(s, "output_activation={}", m.output_activation.name());
            }
            NetworkSpec::Lstm(l) => {
                let _ = writeln!(s, "input_channels={}", l.input_channels);
                let _ = writeln!(s, "seq_len={}", l.seq_len);
                let _ = writeln!(s, "layers={}", list(&l.layers));
                let _ = writeln!(s, "dropout={}", l.dropout);
                let proj = l.projection.map_or_else(|| "none".to_string(), |p| p.to_string());
                let _ = writeln!(s, "projection={proj}");
                let _ = writeln!(s, "head_activation={}", l.head_activation.name());
            }
        }
        s
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad descriptor line {line:?}")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Format(format!("descriptor missing {k}")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("descriptor {k} is not an integer")))
        };
        let list = |k: &str| -> Result<Vec<usize>> {
            let v = get(k)?;
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::Format(format!("descriptor {k} is not a list"))))
                .collect()
        };
        let act = |k: &str| Activation::parse(get(k)?).map_err(|e| Error::Format(e.to_string()));
        let spec = match get("kind")? {
            "mlp" => NetworkSpec::Mlp(MlpSpec {
                input_dim: num("input_dim")?,
                hidden: list("hidden")?,
                hidden_activation: act("hidden_activation")?,
                output_dim: num("output_dim")?,
                output_activation: act("output_activation")?,
            }),
            "lstm" => NetworkSpec::Lstm(LstmSpec {
                input_channels: num("input_channels")?,
                seq_len: num("seq_len")?,
                layers: list("layers")?,
                dropout: get("dropout")?
                    .parse()
                    .map_err(|_| Error::Format("descriptor dropout is not a number".into()))?,
                projection: match get("projection")? {
                    "none" => None,
                    _ => Some(num("projection")?),
                },
                head_activation: act("head_activation")?,
            }),
            other => return Err(Error::Format(format!("unknown network kind {other:?}"))),
        };
        spec.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(spec)
    }
}
