//! JSON wire formats: graphs, kernels (rationals as "p/q" strings), CBNs,
//! transitional random variables, embeddings, and table-backed separoid
//! oracles. Output is canonical (sorted keys, declared orders); input key
//! order is free.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::cbn::Cbn;
use crate::graph::Cdmg;
use crate::kernel::{FiniteVar, Kernel, Space, TransRv};
use crate::rational::{format_rat, parse_rat, rat_from_f64, Rat};
use crate::reparam::RealEmbedding;
use crate::separation::{SepVerdict, SepQuery};
use crate::separoid::{RelationOracle, SeparoidInstance};
use crate::tci::{CiVerdict, TransSpace};

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("expected {0} at {1}")]
    Expected(&'static str, String),
    #[error("bad rational {0:?}")]
    BadRational(String),
    #[error("{0}")]
    Message(String),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
    #[error(transparent)]
    Cbn(#[from] crate::cbn::CbnError),
    #[error(transparent)]
    Tci(#[from] crate::tci::TciError),
    #[error(transparent)]
    Reparam(#[from] crate::reparam::ReparamError),
}

fn expect_str(v: &Value, at: &str) -> Result<String, JsonError> {
    v.as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| JsonError::Expected("string", at.to_string()))
}

fn expect_array<'a>(v: &'a Value, at: &str) -> Result<&'a Vec<Value>, JsonError> {
    v.as_array()
        .ok_or_else(|| JsonError::Expected("array", at.to_string()))
}

fn expect_object<'a>(v: &'a Value, at: &str) -> Result<&'a Map<String, Value>, JsonError> {
    v.as_object()
        .ok_or_else(|| JsonError::Expected("object", at.to_string()))
}

fn string_list(v: &Value, at: &str) -> Result<Vec<String>, JsonError> {
    expect_array(v, at)?
        .iter()
        .map(|x| expect_str(x, at))
        .collect()
}

fn pair_list(v: &Value, at: &str) -> Result<Vec<(String, String)>, JsonError> {
    expect_array(v, at)?
        .iter()
        .map(|x| {
            let arr = expect_array(x, at)?;
            if arr.len() != 2 {
                return Err(JsonError::Expected("pair", at.to_string()));
            }
            Ok((expect_str(&arr[0], at)?, expect_str(&arr[1], at)?))
        })
        .collect()
}

pub fn graph_to_json(g: &Cdmg) -> Value {
    json!({
        "inputs": g.inputs().iter().collect::<Vec<_>>(),
        "outputs": g.outputs().iter().collect::<Vec<_>>(),
        "directed": g.directed().iter().map(|(a, b)| vec![a, b]).collect::<Vec<_>>(),
        "bidirected": g.bidirected().iter().map(|(a, b)| vec![a, b]).collect::<Vec<_>>(),
    })
}

pub fn graph_from_json(v: &Value) -> Result<Cdmg, JsonError> {
    let obj = expect_object(v, "graph")?;
    let inputs = obj
        .get("inputs")
        .map(|x| string_list(x, "inputs"))
        .transpose()?
        .unwrap_or_default();
    let outputs = obj
        .get("outputs")
        .map(|x| string_list(x, "outputs"))
        .transpose()?
        .unwrap_or_default();
    let directed = obj
        .get("directed")
        .map(|x| pair_list(x, "directed"))
        .transpose()?
        .unwrap_or_default();
    let bidirected = obj
        .get("bidirected")
        .map(|x| pair_list(x, "bidirected"))
        .transpose()?
        .unwrap_or_default();
    Ok(Cdmg::new(inputs, outputs, directed, bidirected)?)
}

fn var_to_json(v: &FiniteVar) -> Value {
    json!({"name": v.name, "outcomes": v.outcomes})
}

fn var_from_json(v: &Value) -> Result<FiniteVar, JsonError> {
    let obj = expect_object(v, "variable")?;
    Ok(FiniteVar {
        name: expect_str(
            obj.get("name")
                .ok_or_else(|| JsonError::Expected("name", "variable".into()))?,
            "name",
        )?,
        outcomes: string_list(
            obj.get("outcomes")
                .ok_or_else(|| JsonError::Expected("outcomes", "variable".into()))?,
            "outcomes",
        )?,
    })
}

fn space_to_json(s: &Space) -> Value {
    Value::Array(s.vars().iter().map(var_to_json).collect())
}

fn space_from_json(v: &Value, at: &str) -> Result<Space, JsonError> {
    let vars = expect_array(v, at)?
        .iter()
        .map(var_from_json)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Space::new(vars)?)
}

/// Parses `"p/q"` strings or JSON numbers; numbers flip the float flag.
fn rat_from_value(v: &Value, float_seen: &mut bool) -> Result<Rat, JsonError> {
    match v {
        Value::String(s) => parse_rat(s).ok_or_else(|| JsonError::BadRational(s.clone())),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(crate::rational::rat_int(i))
            } else {
                *float_seen = true;
                let f = n
                    .as_f64()
                    .ok_or_else(|| JsonError::BadRational(n.to_string()))?;
                rat_from_f64(f).ok_or_else(|| JsonError::BadRational(n.to_string()))
            }
        }
        _ => Err(JsonError::Expected("rational", "rows".into())),
    }
}

/// Canonical kernel serialization: rows keyed by source assignment in
/// declared order, zero entries omitted, rationals as `"p/q"`.
pub fn kernel_to_json(k: &Kernel) -> Value {
    let mut rows = Map::new();
    for s in 0..k.source().size() {
        let mut row = Map::new();
        for t in 0..k.target().size() {
            let p = k.entry(s, t);
            if !num_traits::Zero::is_zero(p) {
                row.insert(k.target().label(t), Value::String(format_rat(p)));
            }
        }
        rows.insert(k.source().label(s), Value::Object(row));
    }
    json!({
        "source": space_to_json(k.source()),
        "target": space_to_json(k.target()),
        "rows": Value::Object(rows),
    })
}

/// Accepts rationals as strings or numbers; numbers put the kernel in float
/// mode (validated and renormalized within `atol`, flagged downstream).
pub fn kernel_from_json(v: &Value, atol: &Rat) -> Result<Kernel, JsonError> {
    let obj = expect_object(v, "kernel")?;
    let source = space_from_json(
        obj.get("source")
            .ok_or_else(|| JsonError::Expected("source", "kernel".into()))?,
        "source",
    )?;
    let target = space_from_json(
        obj.get("target")
            .ok_or_else(|| JsonError::Expected("target", "kernel".into()))?,
        "target",
    )?;
    let rows_obj = expect_object(
        obj.get("rows")
            .ok_or_else(|| JsonError::Expected("rows", "kernel".into()))?,
        "rows",
    )?;
    let mut float_seen = false;
    let mut rows = vec![vec![crate::rational::zero(); target.size()]; source.size()];
    for (key, row_val) in rows_obj {
        let s = source.parse_label(key)?;
        let row_obj = expect_object(row_val, key)?;
        for (tkey, p) in row_obj {
            let t = target.parse_label(tkey)?;
            rows[s][t] = rat_from_value(p, &mut float_seen)?;
        }
    }
    if float_seen {
        Ok(Kernel::new_float(source, target, rows, atol)?)
    } else {
        Ok(Kernel::new(source, target, rows)?)
    }
}

pub fn cbn_to_json(m: &Cbn) -> Value {
    let spaces: Map<String, Value> = m
        .spaces()
        .iter()
        .map(|(k, v)| (k.clone(), Value::Array(v.outcomes.iter().map(|o| json!(o)).collect())))
        .collect();
    let kernels: Map<String, Value> = m
        .kernels()
        .iter()
        .map(|(k, v)| (k.clone(), kernel_to_json(v)))
        .collect();
    json!({
        "graph": graph_to_json(m.graph()),
        "latent": m.latent().iter().collect::<Vec<_>>(),
        "spaces": Value::Object(spaces),
        "kernels": Value::Object(kernels),
    })
}

pub fn cbn_from_json(v: &Value, atol: &Rat) -> Result<Cbn, JsonError> {
    let obj = expect_object(v, "cbn")?;
    let graph = graph_from_json(
        obj.get("graph")
            .ok_or_else(|| JsonError::Expected("graph", "cbn".into()))?,
    )?;
    let latent: BTreeSet<String> = obj
        .get("latent")
        .map(|x| string_list(x, "latent"))
        .transpose()?
        .unwrap_or_default()
        .into_iter()
        .collect();
    let spaces_obj = expect_object(
        obj.get("spaces")
            .ok_or_else(|| JsonError::Expected("spaces", "cbn".into()))?,
        "spaces",
    )?;
    let mut spaces: BTreeMap<String, FiniteVar> = BTreeMap::new();
    for (name, outcomes) in spaces_obj {
        spaces.insert(
            name.clone(),
            FiniteVar {
                name: name.clone(),
                outcomes: string_list(outcomes, name)?,
            },
        );
    }
    let kernels_obj = expect_object(
        obj.get("kernels")
            .ok_or_else(|| JsonError::Expected("kernels", "cbn".into()))?,
        "kernels",
    )?;
    let mut kernels: BTreeMap<String, Kernel> = BTreeMap::new();
    for (name, kv) in kernels_obj {
        kernels.insert(name.clone(), kernel_from_json(kv, atol)?);
    }
    Ok(Cbn::new(graph, latent, spaces, kernels)?)
}

/// Transitional random variable formats:
/// `{"projection": ["A","T"], "rename": {"A": "x.A"}}`,
/// `{"constant": true}`,
/// `{"target": [vars], "map": {"<wt-assignment>": "<target-assignment>"}}`,
/// `{"target": [vars], "kernel": <kernel>}`.
pub fn rv_from_json(v: &Value, ts: &TransSpace, atol: &Rat) -> Result<TransRv, JsonError> {
    let obj = expect_object(v, "rv")?;
    if obj.get("constant").and_then(|x| x.as_bool()) == Some(true) {
        return Ok(TransRv::constant_star());
    }
    if let Some(proj) = obj.get("projection") {
        let names: BTreeSet<String> = string_list(proj, "projection")?.into_iter().collect();
        let rename: Vec<(String, String)> = match obj.get("rename") {
            Some(r) => expect_object(r, "rename")?
                .iter()
                .map(|(k, v)| Ok((k.clone(), expect_str(v, "rename")?)))
                .collect::<Result<Vec<_>, JsonError>>()?,
            None => Vec::new(),
        };
        return Ok(TransRv::projection(ts.wt(), &names, &rename)?);
    }
    let target = space_from_json(
        obj.get("target")
            .ok_or_else(|| JsonError::Expected("target", "rv".into()))?,
        "target",
    )?;
    if let Some(map) = obj.get("map") {
        let map_obj = expect_object(map, "map")?;
        let mut table = vec![usize::MAX; ts.wt().size()];
        for (key, val) in map_obj {
            let i = ts.wt().parse_label(key)?;
            table[i] = target.parse_label(&expect_str(val, key)?)?;
        }
        if table.iter().any(|&x| x == usize::MAX) {
            return Err(JsonError::Message("map is not total on (W,T)".into()));
        }
        return Ok(TransRv::det(target, table));
    }
    if let Some(kv) = obj.get("kernel") {
        let kernel = kernel_from_json(kv, atol)?;
        if kernel.source() != ts.wt() || kernel.target() != &target {
            return Err(JsonError::Message(
                "rv kernel must map the joined (W,T) space to the target".into(),
            ));
        }
        return Ok(TransRv::stoch(kernel));
    }
    Err(JsonError::Expected(
        "projection, constant, map, or kernel",
        "rv".into(),
    ))
}

pub fn embedding_to_json(e: &RealEmbedding) -> Value {
    json!({
        "var": var_to_json(&e.var),
        "values": e.values.iter().map(|v| json!(format_rat(v))).collect::<Vec<_>>(),
    })
}

pub fn embedding_from_json(v: &Value) -> Result<RealEmbedding, JsonError> {
    let obj = expect_object(v, "embedding")?;
    let var = var_from_json(
        obj.get("var")
            .ok_or_else(|| JsonError::Expected("var", "embedding".into()))?,
    )?;
    let values = expect_array(
        obj.get("values")
            .ok_or_else(|| JsonError::Expected("values", "embedding".into()))?,
        "values",
    )?
    .iter()
    .map(|x| {
        let s = expect_str(x, "values")?;
        parse_rat(&s).ok_or(JsonError::BadRational(s))
    })
    .collect::<Result<Vec<_>, _>>()?;
    Ok(RealEmbedding::new(var, values)?)
}

/// Table-backed separoid oracle:
/// `{"labels": [...], "join": [[...]], "leq": [[...]],
///   "relation": [[[bool]]], "bottom": i, "tau": i, "kappa": i}`.
pub fn separoid_from_json(v: &Value) -> Result<SeparoidInstance, JsonError> {
    let obj = expect_object(v, "separoid")?;
    let labels = string_list(
        obj.get("labels")
            .ok_or_else(|| JsonError::Expected("labels", "separoid".into()))?,
        "labels",
    )?;
    let n = labels.len();
    let usize_at = |key: &str| -> Result<usize, JsonError> {
        obj.get(key)
            .and_then(|x| x.as_u64())
            .map(|x| x as usize)
            .ok_or_else(|| JsonError::Expected("index", key.to_string()))
    };
    let join: Vec<Vec<usize>> = expect_array(
        obj.get("join")
            .ok_or_else(|| JsonError::Expected("join", "separoid".into()))?,
        "join",
    )?
    .iter()
    .map(|row| {
        expect_array(row, "join")?
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|v| v as usize)
                    .ok_or_else(|| JsonError::Expected("index", "join".into()))
            })
            .collect()
    })
    .collect::<Result<Vec<_>, _>>()?;
    let leq: Vec<Vec<bool>> = expect_array(
        obj.get("leq")
            .ok_or_else(|| JsonError::Expected("leq", "separoid".into()))?,
        "leq",
    )?
    .iter()
    .map(|row| {
        expect_array(row, "leq")?
            .iter()
            .map(|x| {
                x.as_bool()
                    .ok_or_else(|| JsonError::Expected("bool", "leq".into()))
            })
            .collect()
    })
    .collect::<Result<Vec<_>, _>>()?;
    let rel: Vec<Vec<Vec<bool>>> = expect_array(
        obj.get("relation")
            .ok_or_else(|| JsonError::Expected("relation", "separoid".into()))?,
        "relation",
    )?
    .iter()
    .map(|plane| -> Result<Vec<Vec<bool>>, JsonError> {
        expect_array(plane, "relation")?
            .iter()
            .map(|row| {
                expect_array(row, "relation")?
                    .iter()
                    .map(|x| {
                        x.as_bool()
                            .ok_or_else(|| JsonError::Expected("bool", "relation".into()))
                    })
                    .collect()
            })
            .collect()
    })
    .collect::<Result<Vec<_>, _>>()?;
    if rel.len() != n || rel.iter().any(|p| p.len() != n || p.iter().any(|r| r.len() != n)) {
        return Err(JsonError::Message("relation table must be n^3".into()));
    }
    let relation: RelationOracle = Arc::new(move |a, b, c| rel[a][b][c]);
    let inst = SeparoidInstance {
        labels,
        join,
        leq,
        relation,
        bottom: usize_at("bottom")?,
        tau: usize_at("tau")?,
        kappa: usize_at("kappa")?,
    };
    inst.validate()
        .map_err(|e| JsonError::Message(e.to_string()))?;
    Ok(inst)
}

pub fn sep_verdict_to_json(v: &SepVerdict) -> Value {
    match &v.witness_walk {
        Some(w) if !v.separated => json!({
            "separated": false,
            "witness_walk": w.render(),
        }),
        _ => json!({"separated": v.separated}),
    }
}

pub fn sep_query_to_json(q: &SepQuery) -> Value {
    json!({
        "a": q.a.iter().collect::<Vec<_>>(),
        "b": q.b.iter().collect::<Vec<_>>(),
        "c": q.c.iter().collect::<Vec<_>>(),
    })
}

pub fn ci_verdict_to_json(v: &CiVerdict) -> Value {
    let mut obj = Map::new();
    obj.insert("independent".into(), json!(v.independent));
    obj.insert("exact".into(), json!(v.exact));
    if let Some(w) = &v.witness {
        obj.insert("witness".into(), kernel_to_json(w));
    }
    if let Some(ce) = &v.counterexample {
        obj.insert(
            "counterexample".into(),
            json!({
                "first": {"t": ce.first.t, "y": ce.first.y, "z": ce.first.z},
                "second": {"t": ce.second.t, "y": ce.second.y, "z": ce.second.z},
            }),
        );
    }
    Value::Object(obj)
}
