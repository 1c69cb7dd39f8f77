//! Plain-text tensor serialization for [`ActorCritic`] and [`AdamState`].
//!
//! The format is line-oriented and self-describing:
//!
//! ```text
//! SINGAIT-CKPT-v1
//! tensor policy.layer0.weight 64 20
//! <row-major values, one matrix row per line>
//! tensor policy.layer0.bias 64
//! <values on one line>
//! ...
//! ```
//!
//! Values are written with Rust's shortest-round-trip float formatting, so a
//! write/read cycle reproduces every `f64` bit for bit. Optimizer state rides
//! along as `adam.*` tensors; readers that only need the policy ignore it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use alloc::collections::BTreeMap;

use super::{ActorCritic, AdamState, Mlp, PolicyParams, ValueParams};

pub const CHECKPOINT_HEADER: &str = "SINGAIT-CKPT-v1";

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointError {
    /// First line is not the expected format marker.
    BadHeader,
    /// Structural problem at a given 1-based line.
    Syntax { line: usize, msg: String },
    /// Tensor block had the wrong number of values.
    WrongCount { name: String, expected: usize, got: usize },
    /// The same tensor name appeared twice.
    Duplicate(String),
    /// A tensor required to rebuild the nets is absent.
    Missing(String),
    /// Tensor shapes do not chain into a valid network.
    Shape(String),
    /// A value failed to parse or was not finite.
    BadValue { name: String, token: String },
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadHeader => {
                write!(f, "missing checkpoint header '{CHECKPOINT_HEADER}'")
            }
            CheckpointError::Syntax { line, msg } => write!(f, "line {line}: {msg}"),
            CheckpointError::WrongCount { name, expected, got } => {
                write!(f, "tensor '{name}': expected {expected} values, got {got}")
            }
            CheckpointError::Duplicate(name) => write!(f, "tensor '{name}' appears twice"),
            CheckpointError::Missing(name) => write!(f, "tensor '{name}' is missing"),
            CheckpointError::Shape(msg) => write!(f, "inconsistent shapes: {msg}"),
            CheckpointError::BadValue { name, token } => {
                write!(f, "tensor '{name}': bad value '{token}'")
            }
        }
    }
}

impl core::error::Error for CheckpointError {}

/// Names for the actor-critic tensor list, in [`ActorCritic::tensors`] order.
fn tensor_names(ac: &ActorCritic) -> Vec<String> {
    let mut names = Vec::new();
    for l in 0..ac.policy.mlp.layer_count() {
        names.push(format!("policy.layer{l}.weight"));
        names.push(format!("policy.layer{l}.bias"));
    }
    names.push("policy.log_std".to_string());
    for l in 0..ac.value.mlp.layer_count() {
        names.push(format!("value.layer{l}.weight"));
        names.push(format!("value.layer{l}.bias"));
    }
    names
}

fn tensor_shapes(ac: &ActorCritic) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    let ps = ac.policy.mlp.sizes();
    for l in 0..ac.policy.mlp.layer_count() {
        shapes.push(vec![ps[l + 1], ps[l]]);
        shapes.push(vec![ps[l + 1]]);
    }
    shapes.push(vec![ac.policy.log_std.len()]);
    let vs = ac.value.mlp.sizes();
    for l in 0..ac.value.mlp.layer_count() {
        shapes.push(vec![vs[l + 1], vs[l]]);
        shapes.push(vec![vs[l + 1]]);
    }
    shapes
}

fn push_tensor(out: &mut String, name: &str, shape: &[usize], values: &[f64]) {
    out.push_str("tensor ");
    out.push_str(name);
    for d in shape {
        out.push(' ');
        out.push_str(&d.to_string());
    }
    out.push('\n');
    let row = if shape.len() == 2 { shape[1] } else { values.len().max(1) };
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{v}"));
        out.push(if (i + 1) % row == 0 { '\n' } else { ' ' });
    }
    if values.len() % row != 0 {
        out.push('\n');
    }
}

/// Serializes the parameter set and, optionally, the optimizer state.
pub fn write_checkpoint(ac: &ActorCritic, adam: Option<&AdamState>) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_HEADER);
    out.push('\n');
    let names = tensor_names(ac);
    let shapes = tensor_shapes(ac);
    for ((name, shape), tensor) in names.iter().zip(&shapes).zip(ac.tensors()) {
        push_tensor(&mut out, name, shape, tensor);
    }
    if let Some(state) = adam {
        push_tensor(&mut out, "adam.step", &[1], &[state.step as f64]);
        push_tensor(&mut out, "adam.beta1_pow", &[1], &[state.beta1_pow]);
        push_tensor(&mut out, "adam.beta2_pow", &[1], &[state.beta2_pow]);
        for ((name, shape), m) in names.iter().zip(&shapes).zip(&state.m) {
            push_tensor(&mut out, &format!("adam.m.{name}"), shape, m);
        }
        for ((name, shape), v) in names.iter().zip(&shapes).zip(&state.v) {
            push_tensor(&mut out, &format!("adam.v.{name}"), shape, v);
        }
    }
    out
}

type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

fn parse_tensors(text: &str) -> Result<TensorMap, CheckpointError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim(),
            None => return Err(CheckpointError::BadHeader),
        }
    };
    if header != CHECKPOINT_HEADER {
        return Err(CheckpointError::BadHeader);
    }
    let mut map = TensorMap::new();
    let mut current: Option<(String, Vec<usize>, Vec<f64>)> = None;
    let close = |map: &mut TensorMap,
                 cur: Option<(String, Vec<usize>, Vec<f64>)>|
     -> Result<(), CheckpointError> {
        if let Some((name, shape, values)) = cur {
            let expected: usize = shape.iter().product();
            if values.len() != expected {
                return Err(CheckpointError::WrongCount { name, expected, got: values.len() });
            }
            if map.insert(name.clone(), (shape, values)).is_some() {
                return Err(CheckpointError::Duplicate(name));
            }
        }
        Ok(())
    };
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tensor ") {
            close(&mut map, current.take())?;
            let mut parts = rest.split_whitespace();
            let name = parts
                .next()
                .ok_or(CheckpointError::Syntax { line: idx + 1, msg: "missing tensor name".into() })?
                .to_string();
            let mut shape = Vec::new();
            for p in parts {
                let d: usize = p.parse().map_err(|_| CheckpointError::Syntax {
                    line: idx + 1,
                    msg: format!("bad dimension '{p}'"),
                })?;
                shape.push(d);
            }
            if shape.is_empty() || shape.iter().any(|&d| d == 0) {
                return Err(CheckpointError::Syntax {
                    line: idx + 1,
                    msg: "tensor needs at least one nonzero dimension".into(),
                });
            }
            current = Some((name, shape, Vec::new()));
        } else {
            let Some((name, _, values)) = current.as_mut() else {
                return Err(CheckpointError::Syntax {
                    line: idx + 1,
                    msg: "values before any tensor header".into(),
                });
            };
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| CheckpointError::BadValue {
                    name: name.clone(),
                    token: tok.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(CheckpointError::BadValue {
                        name: name.clone(),
                        token: tok.to_string(),
                    });
                }
                values.push(v);
            }
        }
    }
    close(&mut map, current.take())?;
    Ok(map)
}

fn take_tensor(
    map: &mut TensorMap,
    name: &str,
    ndim: usize,
) -> Result<(Vec<usize>, Vec<f64>), CheckpointError> {
    let (shape, values) =
        map.remove(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
    if shape.len() != ndim {
        return Err(CheckpointError::Shape(format!(
            "tensor '{name}' has {} dims, expected {ndim}",
            shape.len()
        )));
    }
    Ok((shape, values))
}

fn rebuild_mlp(map: &mut TensorMap, prefix: &str) -> Result<Mlp, CheckpointError> {
    let mut sizes: Vec<usize> = Vec::new();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut layer = 0usize;
    loop {
        let wname = format!("{prefix}.layer{layer}.weight");
        if !map.contains_key(&wname) {
            break;
        }
        let (wshape, wvals) = take_tensor(map, &wname, 2)?;
        let (bshape, bvals) = take_tensor(map, &format!("{prefix}.layer{layer}.bias"), 1)?;
        if bshape[0] != wshape[0] {
            return Err(CheckpointError::Shape(format!(
                "{prefix}.layer{layer}: bias length {} vs weight rows {}",
                bshape[0], wshape[0]
            )));
        }
        if layer == 0 {
            sizes.push(wshape[1]);
        } else if sizes[layer] != wshape[1] {
            return Err(CheckpointError::Shape(format!(
                "{prefix}.layer{layer}: input {} does not chain from previous output {}",
                wshape[1], sizes[layer]
            )));
        }
        sizes.push(wshape[0]);
        weights.push(wvals);
        biases.push(bvals);
        layer += 1;
    }
    if layer == 0 {
        return Err(CheckpointError::Missing(format!("{prefix}.layer0.weight")));
    }
    Ok(Mlp { sizes, weights, biases })
}

/// Parses a checkpoint back into parameters and, when present, Adam state.
pub fn read_checkpoint(text: &str) -> Result<(ActorCritic, Option<AdamState>), CheckpointError> {
    let mut map = parse_tensors(text)?;
    let policy_mlp = rebuild_mlp(&mut map, "policy")?;
    let (ls_shape, log_std) = take_tensor(&mut map, "policy.log_std", 1)?;
    if ls_shape[0] != policy_mlp.output_dim() {
        return Err(CheckpointError::Shape(format!(
            "policy.log_std length {} vs policy output {}",
            ls_shape[0],
            policy_mlp.output_dim()
        )));
    }
    let value_mlp = rebuild_mlp(&mut map, "value")?;
    if value_mlp.output_dim() != 1 {
        return Err(CheckpointError::Shape("value net must have one output".into()));
    }
    if value_mlp.input_dim() != policy_mlp.input_dim() {
        return Err(CheckpointError::Shape(format!(
            "policy input {} vs value input {}",
            policy_mlp.input_dim(),
            value_mlp.input_dim()
        )));
    }
    let ac = ActorCritic {
        policy: PolicyParams { mlp: policy_mlp, log_std },
        value: ValueParams { mlp: value_mlp },
    };

    let adam = if map.contains_key("adam.step") {
        let (_, step) = take_tensor(&mut map, "adam.step", 1)?;
        let (_, b1) = take_tensor(&mut map, "adam.beta1_pow", 1)?;
        let (_, b2) = take_tensor(&mut map, "adam.beta2_pow", 1)?;
        if step[0] < 0.0 || step[0] != libm::floor(step[0]) {
            return Err(CheckpointError::BadValue {
                name: "adam.step".into(),
                token: format!("{}", step[0]),
            });
        }
        let names = tensor_names(&ac);
        let shapes = tensor_shapes(&ac);
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, shape) in names.iter().zip(&shapes) {
            let (ms, mv) = take_tensor(&mut map, &format!("adam.m.{name}"), shape.len())?;
            let (vs, vv) = take_tensor(&mut map, &format!("adam.v.{name}"), shape.len())?;
            if &ms != shape || &vs != shape {
                return Err(CheckpointError::Shape(format!(
                    "adam moments for '{name}' do not match the parameter shape"
                )));
            }
            m.push(mv);
            v.push(vv);
        }
        Some(AdamState { step: step[0] as u64, beta1_pow: b1[0], beta2_pow: b2[0], m, v })
    } else {
        None
    };
    Ok((ac, adam))
}
