//! Declarative text format for SCM instances: domains, prior tables,
//! function tables, and admissible sets, one directive per line.
//!
//! ```text
//! domains f=2 s=2 ux=1 uy=2 x=4 y=2
//! prior f 0.5 0.5
//! prior s 0.75 0.25
//! prior ux 1
//! prior uy 0.8 0.2
//! query 0
//! phi 0 1 2 3
//! g 0 1 1 0
//! adm 0 : 0
//! adm 1 : 1
//! ```

use std::collections::BTreeSet;

use super::{DiscreteScm, ScmError};

pub fn render_scm(scm: &DiscreteScm) -> String {
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let join_usize = |xs: &[usize]| {
        xs.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::new();
    out.push_str(&format!(
        "domains f={} s={} ux={} uy={} x={} y={}\n",
        scm.f_card, scm.s_card, scm.ux_card, scm.uy_card, scm.x_card, scm.y_card
    ));
    out.push_str(&format!("prior f {}\n", join(&scm.p_f)));
    out.push_str(&format!("prior s {}\n", join(&scm.p_s)));
    out.push_str(&format!("prior ux {}\n", join(&scm.p_ux)));
    out.push_str(&format!("prior uy {}\n", join(&scm.p_uy)));
    out.push_str(&format!("query {}\n", scm.query));
    out.push_str(&format!("phi {}\n", join_usize(scm.phi_table())));
    out.push_str(&format!("g {}\n", join_usize(scm.g_table())));
    for f in 0..scm.f_card {
        let ys: Vec<String> = scm.admissible(f).iter().map(|y| y.to_string()).collect();
        out.push_str(&format!("adm {f} : {}\n", ys.join(" ")));
    }
    out
}

pub fn parse_scm(text: &str) -> Result<DiscreteScm, ScmError> {
    let mut cards: Option<[usize; 6]> = None;
    let mut priors: [Option<Vec<f64>>; 4] = [None, None, None, None];
    let mut query = 0usize;
    let mut phi: Option<Vec<usize>> = None;
    let mut g: Option<Vec<usize>> = None;
    let mut adm: Vec<(usize, Vec<usize>)> = Vec::new();

    let err = |line: usize, what: &str| ScmError::Format(format!("line {line}: {what}"));

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let directive = parts.next().unwrap();
        match directive {
            "domains" => {
                let mut sizes = [0usize; 6];
                let names = ["f", "s", "ux", "uy", "x", "y"];
                for kv in parts {
                    let (key, value) = kv
                        .split_once('=')
                        .ok_or_else(|| err(line_no, "expected name=size"))?;
                    let slot = names
                        .iter()
                        .position(|n| *n == key)
                        .ok_or_else(|| err(line_no, &format!("unknown domain `{key}`")))?;
                    sizes[slot] = value
                        .parse()
                        .map_err(|_| err(line_no, &format!("bad size `{value}`")))?;
                }
                if sizes.contains(&0) {
                    return Err(err(line_no, "all six domains need a positive size"));
                }
                cards = Some(sizes);
            }
            "prior" => {
                let name = parts
                    .next()
                    .ok_or_else(|| err(line_no, "prior needs a variable name"))?;
                let slot = ["f", "s", "ux", "uy"]
                    .iter()
                    .position(|n| *n == name)
                    .ok_or_else(|| err(line_no, &format!("unknown prior variable `{name}`")))?;
                let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
                priors[slot] =
                    Some(values.map_err(|_| err(line_no, "bad probability value"))?);
            }
            "query" => {
                let value = parts
                    .next()
                    .ok_or_else(|| err(line_no, "query needs a value"))?;
                query = value
                    .parse()
                    .map_err(|_| err(line_no, &format!("bad query `{value}`")))?;
            }
            "phi" => {
                let values: Result<Vec<usize>, _> = parts.map(str::parse::<usize>).collect();
                phi = Some(values.map_err(|_| err(line_no, "bad phi entry"))?);
            }
            "g" => {
                let values: Result<Vec<usize>, _> = parts.map(str::parse::<usize>).collect();
                g = Some(values.map_err(|_| err(line_no, "bad g entry"))?);
            }
            "adm" => {
                let f: usize = parts
                    .next()
                    .ok_or_else(|| err(line_no, "adm needs a fact index"))?
                    .parse()
                    .map_err(|_| err(line_no, "bad fact index"))?;
                let colon = parts.next();
                if colon != Some(":") {
                    return Err(err(line_no, "adm expects `adm <f> : <answers>`"));
                }
                let values: Result<Vec<usize>, _> = parts.map(str::parse::<usize>).collect();
                adm.push((f, values.map_err(|_| err(line_no, "bad answer index"))?));
            }
            other => return Err(ScmError::Format(format!(
                "line {line_no}: unknown directive `{other}`"
            ))),
        }
    }

    let cards = cards.ok_or_else(|| ScmError::Format("missing domains line".to_string()))?;
    let [f_card, _, _, _, x_card, y_card] = cards;
    let mut prior_iter = priors.into_iter();
    let p_f = prior_iter
        .next()
        .unwrap()
        .ok_or_else(|| ScmError::Format("missing prior f".to_string()))?;
    let p_s = prior_iter
        .next()
        .unwrap()
        .ok_or_else(|| ScmError::Format("missing prior s".to_string()))?;
    let p_ux = prior_iter
        .next()
        .unwrap()
        .ok_or_else(|| ScmError::Format("missing prior ux".to_string()))?;
    let p_uy = prior_iter
        .next()
        .unwrap()
        .ok_or_else(|| ScmError::Format("missing prior uy".to_string()))?;
    let phi = phi.ok_or_else(|| ScmError::Format("missing phi table".to_string()))?;
    let g = g.ok_or_else(|| ScmError::Format("missing g table".to_string()))?;

    let mut admissible: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); f_card];
    for (f, ys) in adm {
        if f >= f_card {
            return Err(ScmError::Format(format!("adm fact index {f} out of range")));
        }
        admissible[f] = ys.into_iter().collect();
    }

    // Cross-check declared cardinalities against the prior lengths.
    let declared = [cards[0], cards[1], cards[2], cards[3]];
    let actual = [p_f.len(), p_s.len(), p_ux.len(), p_uy.len()];
    if declared != actual {
        return Err(ScmError::Format(format!(
            "prior lengths {actual:?} disagree with declared domains {declared:?}"
        )));
    }

    DiscreteScm::new(p_f, p_s, p_ux, p_uy, x_card, y_card, phi, g, query, admissible)
}
