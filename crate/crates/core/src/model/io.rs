use std::path::Path;

use serde_json::{json, Value};

use super::{Node, Tree, TreeEnsemble};
use crate::corpus::{as_array, as_f64, as_object, as_str, as_usize, field};
use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;

pub fn model_to_json(ens: &TreeEnsemble) -> Value {
    let trees: Vec<Value> = ens
        .trees
        .iter()
        .map(|t| {
            let nodes: Vec<Value> = t
                .nodes
                .iter()
                .map(|n| match *n {
                    Node::Split { feature, threshold, left, right } => {
                        json!({"k": feature, "t": threshold, "l": left, "r": right})
                    }
                    Node::Leaf { value } => json!({"v": value}),
                })
                .collect();
            json!({ "nodes": nodes })
        })
        .collect();
    json!({
        "base_score": ens.base_score,
        "shrinkage": ens.shrinkage,
        "trees": trees,
        "feature_names": ens.feature_names,
    })
}

fn warn_unknown(obj: &serde_json::Map<String, Value>, path: &str, known: &[&str]) {
    for key in obj.keys().filter(|k| !known.contains(&k.as_str())) {
        log::warn!("ignoring unknown model field {path}/{key}");
    }
}

pub fn model_from_json(value: &Value) -> Result<TreeEnsemble> {
    let root = as_object(value, "")?;
    warn_unknown(root, "", &["base_score", "shrinkage", "trees", "feature_names"]);
    let base_score = as_f64(field(root, "", "base_score")?, "/base_score")?;
    let shrinkage = as_f64(field(root, "", "shrinkage")?, "/shrinkage")?;
    let trees_json = as_array(field(root, "", "trees")?, "/trees")?;
    if trees_json.is_empty() {
        return Err(Error::schema("/trees", "at least one tree required"));
    }
    let names_json = as_array(field(root, "", "feature_names")?, "/feature_names")?;
    if names_json.len() != NUM_FEATURES {
        return Err(Error::schema("/feature_names", format!("expected {NUM_FEATURES} names, found {}", names_json.len())));
    }
    let feature_names = names_json
        .iter()
        .enumerate()
        .map(|(k, v)| as_str(v, &format!("/feature_names/{k}")).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;

    let mut trees = Vec::with_capacity(trees_json.len());
    for (ti, tv) in trees_json.iter().enumerate() {
        let tpath = format!("/trees/{ti}");
        let tobj = as_object(tv, &tpath)?;
        warn_unknown(tobj, &tpath, &["nodes"]);
        let nodes_json = as_array(field(tobj, &tpath, "nodes")?, &format!("{tpath}/nodes"))?;
        if nodes_json.is_empty() {
            return Err(Error::schema(format!("{tpath}/nodes"), "tree without nodes"));
        }
        let mut nodes = Vec::with_capacity(nodes_json.len());
        for (ni, nv) in nodes_json.iter().enumerate() {
            let npath = format!("{tpath}/nodes/{ni}");
            let nobj = as_object(nv, &npath)?;
            if let Some(v) = nobj.get("v") {
                warn_unknown(nobj, &npath, &["v"]);
                nodes.push(Node::Leaf { value: as_f64(v, &format!("{npath}/v"))? });
            } else {
                warn_unknown(nobj, &npath, &["k", "t", "l", "r"]);
                let feature = as_usize(field(nobj, &npath, "k")?, &format!("{npath}/k"))?;
                if feature >= NUM_FEATURES {
                    return Err(Error::schema(format!("{npath}/k"), format!("feature index {feature} out of range")));
                }
                nodes.push(Node::Split {
                    feature,
                    threshold: as_f64(field(nobj, &npath, "t")?, &format!("{npath}/t"))?,
                    left: as_usize(field(nobj, &npath, "l")?, &format!("{npath}/l"))?,
                    right: as_usize(field(nobj, &npath, "r")?, &format!("{npath}/r"))?,
                });
            }
        }
        trees.push(Tree { nodes });
    }
    let ens = TreeEnsemble { base_score, shrinkage, trees, feature_names };
    ens.validate().map_err(|e| Error::schema("", e.to_string()))?;
    Ok(ens)
}

pub fn save_model(path: &Path, ens: &TreeEnsemble) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&model_to_json(ens)).expect("model JSON is serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TreeEnsemble> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::schema("", e.to_string()))?;
    model_from_json(&value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TreeEnsemble {
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 52, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { value: 0.1 + 0.2 },
                Node::Leaf { value: -1e-17 },
            ],
        };
        TreeEnsemble::new(0.123456789, 0.1, vec![t, Tree::leaf(1.0 / 3.0)]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let e = sample();
        let text = serde_json::to_string(&model_to_json(&e)).unwrap();
        let back = model_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn empty_tree_list_is_rejected() {
        let mut v = model_to_json(&sample());
        v["trees"] = json!([]);
        match model_from_json(&v) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "/trees"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let mut v = model_to_json(&sample());
        v["objective"] = json!("reg:squarederror");
        assert_eq!(model_from_json(&v).unwrap(), sample());
    }

    #[test]
    fn bad_node_is_located() {
        let mut v = model_to_json(&sample());
        v["trees"][0]["nodes"][0]["l"] = json!("x");
        match model_from_json(&v) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "/trees/0/nodes/0/l"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
