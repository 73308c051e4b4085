//! Line-oriented text formats.
//!
//! Every real number is written with 17 significant digits
//! (`d.dddddddddddddddde±x`), which reads back to the identical `f64`.
//! Fields are separated by a single tab. Free text (sources, annotations,
//! provenance) escapes backslash, tab, newline and carriage return as
//! `\\`, `\t`, `\n` and `\r`.
//!
//! * Latent sets: one record per vector, `subject label v1 .. vM`, with
//!   `-` for an unknown subject, plus a TOML header file next to it.
//! * Cluster models: one center per line plus a TOML header file with the
//!   inertia and the training assignments.
//! * Prototype sets: a single self-describing file. `#` lines carry the
//!   format tag, `dim` and one `provenance` line per source; every other
//!   line is `label source support annotation c1 .. cM`.
//! * PCA maps: `#` lines with format tag, `dim` and `k`, then a `mean`
//!   line, `k` `component` lines and one `variance` line.

use protolatent_core::cluster::{ClusterModel, LatentSet};
use protolatent_core::proto::{PcaMap, Prototype, PrototypeSet, Provenance};
use serde::{Deserialize, Serialize};

use crate::error::TextError;

type Parsed<T> = Result<T, TextError>;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Parsed<f64> {
    let v: f64 = tok.parse().map_err(|_| TextError::new(line, format!("`{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(TextError::new(line, format!("`{tok}` is not finite")));
    }
    Ok(v)
}

fn parse_row(toks: &[&str], line: usize) -> Parsed<Vec<f64>> {
    toks.iter().map(|t| parse_f64(t, line)).collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join("\t")
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str, line: usize) -> Parsed<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(TextError::new(line, format!("bad escape `\\{}`", other.map_or(String::new(), String::from)))),
        }
    }
    Ok(out)
}

fn header_line<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Parsed<(usize, Vec<&'a str>)> {
    match lines.next() {
        Some((n, l)) => {
            let toks: Vec<&str> = l.split('\t').collect();
            if toks[0] != format!("#{key}") {
                return Err(TextError::new(n, format!("expected `#{key}` header")));
            }
            Ok((n, toks[1..].to_vec()))
        }
        None => Err(TextError::new(0, format!("missing `#{key}` header"))),
    }
}

fn header_usize<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Parsed<usize> {
    let (n, toks) = header_line(lines, key)?;
    match toks.as_slice() {
        [v] => v.parse().map_err(|_| TextError::new(n, format!("`{v}` is not a count"))),
        _ => Err(TextError::new(n, format!("`#{key}` takes one value"))),
    }
}

fn format_tag<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, tag: &str, version: u32) -> Parsed<()> {
    let (n, toks) = header_line(lines, tag)?;
    if toks != [version.to_string().as_str()] {
        return Err(TextError::new(n, format!("unsupported `{tag}` version {toks:?}")));
    }
    Ok(())
}

fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

const LATENT_FORMAT: &str = "protolatent-latents";
const CLUSTER_FORMAT: &str = "protolatent-clusters";
const PROTO_FORMAT: &str = "protolatent-prototypes";
const PCA_FORMAT: &str = "protolatent-pca";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentHeader {
    pub format: String,
    pub version: u32,
    pub count: usize,
    pub dim: usize,
    pub source: String,
    pub tap: String,
    pub subjects: bool,
}

/// Records and header text of a latent set.
pub fn latents_to_text(set: &LatentSet) -> (String, String) {
    let mut records = String::new();
    for (i, v) in set.vectors.iter().enumerate() {
        let subject = set.subject_ids.get(i).map_or("-".to_string(), u64::to_string);
        records.push_str(&format!("{subject}\t{}", set.labels[i]));
        if !v.is_empty() {
            records.push('\t');
            records.push_str(&join(v));
        }
        records.push('\n');
    }
    let header = LatentHeader {
        format: LATENT_FORMAT.into(),
        version: 1,
        count: set.len(),
        dim: set.dim().unwrap_or(0),
        source: set.source.clone(),
        tap: set.tap.clone(),
        subjects: !set.subject_ids.is_empty(),
    };
    (records, toml::to_string(&header).expect("header serializes"))
}

pub fn latents_from_text(records: &str, header: &str) -> Parsed<LatentSet> {
    let h: LatentHeader = toml::from_str(header).map_err(|e| TextError::new(0, format!("header: {e}")))?;
    if h.format != LATENT_FORMAT || h.version != 1 {
        return Err(TextError::new(0, format!("header describes `{}` v{}", h.format, h.version)));
    }
    let (mut vectors, mut labels, mut subjects) = (Vec::new(), Vec::new(), Vec::new());
    for (n, l) in numbered(records) {
        let toks: Vec<&str> = l.split('\t').collect();
        if toks.len() != 2 + h.dim {
            return Err(TextError::new(n, format!("expected {} fields, found {}", 2 + h.dim, toks.len())));
        }
        if h.subjects {
            subjects.push(toks[0].parse().map_err(|_| TextError::new(n, format!("bad subject `{}`", toks[0])))?);
        } else if toks[0] != "-" {
            return Err(TextError::new(n, "header says subjects are unknown"));
        }
        labels.push(match toks[1] {
            "0" => 0,
            "1" => 1,
            t => return Err(TextError::new(n, format!("bad label `{t}`"))),
        });
        vectors.push(parse_row(&toks[2..], n)?);
    }
    if vectors.len() != h.count {
        return Err(TextError::new(0, format!("header count {} but {} records", h.count, vectors.len())));
    }
    let set = LatentSet::new(vectors, labels, h.source, h.tap).map_err(|e| TextError::new(0, e.to_string()))?;
    set.with_subjects(subjects).map_err(|e| TextError::new(0, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterHeader {
    pub format: String,
    pub version: u32,
    pub clusters: usize,
    pub dim: usize,
    pub inertia: f64,
    pub assignments: Vec<usize>,
}

/// Centers and header text of a cluster model. Restart traces are not
/// stored.
pub fn clusters_to_text(model: &ClusterModel) -> (String, String) {
    let records: String = model.centers.iter().map(|c| join(c) + "\n").collect();
    let header = ClusterHeader {
        format: CLUSTER_FORMAT.into(),
        version: 1,
        clusters: model.clusters(),
        dim: model.dim(),
        inertia: model.inertia,
        assignments: model.assignments.clone(),
    };
    (records, toml::to_string(&header).expect("header serializes"))
}

pub fn clusters_from_text(records: &str, header: &str) -> Parsed<ClusterModel> {
    let h: ClusterHeader = toml::from_str(header).map_err(|e| TextError::new(0, format!("header: {e}")))?;
    if h.format != CLUSTER_FORMAT || h.version != 1 {
        return Err(TextError::new(0, format!("header describes `{}` v{}", h.format, h.version)));
    }
    let mut centers = Vec::new();
    for (n, l) in numbered(records) {
        let toks: Vec<&str> = l.split('\t').collect();
        if toks.len() != h.dim {
            return Err(TextError::new(n, format!("expected {} values, found {}", h.dim, toks.len())));
        }
        centers.push(parse_row(&toks, n)?);
    }
    if centers.len() != h.clusters {
        return Err(TextError::new(0, format!("header says {} clusters, found {}", h.clusters, centers.len())));
    }
    if let Some(&a) = h.assignments.iter().find(|&&a| a >= h.clusters) {
        return Err(TextError::new(0, format!("assignment {a} has no cluster")));
    }
    Ok(ClusterModel {
        centers,
        assignments: h.assignments,
        inertia: h.inertia,
        traces: Vec::new(),
    })
}

pub fn prototypes_to_text(set: &PrototypeSet) -> String {
    let mut out = format!("#{PROTO_FORMAT}\t1\n#dim\t{}\n", set.dim);
    for p in &set.provenance {
        out.push_str(&format!("#provenance\t{}\t{}\n", escape(&p.network), escape(&p.dataset)));
    }
    for p in &set.prototypes {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}",
            p.label,
            escape(&p.source),
            fmt_f64(p.support),
            escape(&p.annotation)
        ));
        if !p.center.is_empty() {
            out.push('\t');
            out.push_str(&join(&p.center));
        }
        out.push('\n');
    }
    out
}

pub fn prototypes_from_text(text: &str) -> Parsed<PrototypeSet> {
    let mut lines = numbered(text).peekable();
    format_tag(&mut lines, PROTO_FORMAT, 1)?;
    let dim = header_usize(&mut lines, "dim")?;
    let mut provenance = Vec::new();
    while let Some(&(n, l)) = lines.peek() {
        if !l.starts_with('#') {
            break;
        }
        let (_, toks) = header_line(&mut lines, "provenance")?;
        match toks.as_slice() {
            [net, ds] => provenance.push(Provenance {
                network: unescape(net, n)?,
                dataset: unescape(ds, n)?,
            }),
            _ => return Err(TextError::new(n, "`#provenance` takes a network and a dataset")),
        }
    }
    let mut prototypes = Vec::new();
    for (n, l) in lines {
        let toks: Vec<&str> = l.split('\t').collect();
        if toks.len() != 4 + dim {
            return Err(TextError::new(n, format!("expected {} fields, found {}", 4 + dim, toks.len())));
        }
        let label = match toks[0] {
            "0" => 0,
            "1" => 1,
            t => return Err(TextError::new(n, format!("bad label `{t}`"))),
        };
        prototypes.push(Prototype {
            center: parse_row(&toks[4..], n)?,
            label,
            annotation: unescape(toks[3], n)?,
            source: unescape(toks[1], n)?,
            support: parse_f64(toks[2], n)?,
        });
    }
    PrototypeSet::new(prototypes, dim, provenance).map_err(|e| TextError::new(0, e.to_string()))
}

pub fn pca_to_text(map: &PcaMap) -> String {
    let mut out = format!("#{PCA_FORMAT}\t1\n#dim\t{}\n#k\t{}\n", map.input_dim(), map.k());
    out.push_str(&format!("mean\t{}\n", join(&map.mean)));
    for c in &map.components {
        out.push_str(&format!("component\t{}\n", join(c)));
    }
    out.push_str("variance");
    for &v in &map.explained_variance {
        out.push('\t');
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
    out
}

pub fn pca_from_text(text: &str) -> Parsed<PcaMap> {
    let mut lines = numbered(text);
    format_tag(&mut lines, PCA_FORMAT, 1)?;
    let dim = header_usize(&mut lines, "dim")?;
    let k = header_usize(&mut lines, "k")?;
    let mut row = |key: &str, len: usize| -> Parsed<Vec<f64>> {
        let (n, l) = lines.next().ok_or_else(|| TextError::new(0, format!("missing `{key}` line")))?;
        let toks: Vec<&str> = l.split('\t').collect();
        if toks[0] != key || toks.len() != len + 1 {
            return Err(TextError::new(n, format!("expected `{key}` with {len} values")));
        }
        parse_row(&toks[1..], n)
    };
    let mean = row("mean", dim)?;
    let components = (0..k).map(|_| row("component", dim)).collect::<Parsed<Vec<_>>>()?;
    let explained_variance = row("variance", k)?;
    if let Some((n, _)) = lines.next() {
        return Err(TextError::new(n, "unexpected line after `variance`"));
    }
    Ok(PcaMap {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn protos() -> PrototypeSet {
        PrototypeSet::new(
            vec![
                Prototype {
                    center: vec![0.1, -2.5e-300, 1.0 / 3.0],
                    label: 1,
                    annotation: "PD, stage\t2\nback\\slash".into(),
                    source: "net a".into(),
                    support: 0.25,
                },
                Prototype {
                    center: vec![0.0, -0.0, 7.0],
                    label: 0,
                    annotation: String::new(),
                    source: String::new(),
                    support: 0.75,
                },
            ],
            3,
            vec![Provenance {
                network: "dual.ppnn".into(),
                dataset: "train".into(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn seventeen_digits_survive_a_round_trip() {
        for x in [0.1, 1.0 / 3.0, f64::MAX, f64::MIN_POSITIVE, 5e-324, -123456.789] {
            let s = fmt_f64(x);
            assert_eq!(s.split('e').next().unwrap().replace(['-', '.'], "").len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn prototype_files_round_trip() {
        let set = protos();
        let text = prototypes_to_text(&set);
        let back = prototypes_from_text(&text).unwrap();
        assert_eq!(back, set);
        assert_eq!(prototypes_to_text(&back), text);
    }

    #[test]
    fn empty_prototype_sets_round_trip() {
        let set = PrototypeSet::empty(4);
        assert_eq!(prototypes_from_text(&prototypes_to_text(&set)).unwrap(), set);
    }

    #[test]
    fn prototype_parse_errors_name_the_line() {
        let bad = prototypes_to_text(&protos()).replace("7.5000000000000000e-1", "zz");
        let err = prototypes_from_text(&bad).unwrap_err();
        assert_eq!(err.line, 5);
        let short = "#protolatent-prototypes\t1\n#dim\t3\n1\ta\t0.5\tx\t1\t2\n";
        assert_eq!(prototypes_from_text(short).unwrap_err().line, 3);
        assert!(prototypes_from_text("#protolatent-prototypes\t2\n#dim\t3\n").is_err());
    }

    #[test]
    fn latent_sets_round_trip_with_and_without_subjects() {
        let set = LatentSet::new(vec![vec![1.5, -0.1], vec![0.0, 3.0]], vec![1, 0], "ds", "latent").unwrap();
        let (r, h) = latents_to_text(&set);
        assert_eq!(latents_from_text(&r, &h).unwrap(), set);
        let set = set.with_subjects(vec![4, 9]).unwrap();
        let (r, h) = latents_to_text(&set);
        assert!(r.starts_with("4\t1\t"));
        assert_eq!(latents_from_text(&r, &h).unwrap(), set);
        let truncated: String = r.lines().next().unwrap().to_string() + "\n";
        assert!(latents_from_text(&truncated, &h).is_err());
    }

    #[test]
    fn cluster_models_round_trip_without_traces() {
        let model = ClusterModel {
            centers: vec![vec![0.5, 1.0], vec![-3.0, 2.0]],
            assignments: vec![0, 1, 1],
            inertia: 0.125,
            traces: vec![vec![1.0]],
        };
        let (r, h) = clusters_to_text(&model);
        let back = clusters_from_text(&r, &h).unwrap();
        assert_eq!(back.centers, model.centers);
        assert_eq!(back.assignments, model.assignments);
        assert_eq!(back.inertia, model.inertia);
        assert!(back.traces.is_empty());
    }

    #[test]
    fn pca_maps_round_trip() {
        let map = PcaMap {
            mean: vec![0.1, 0.2, 0.3],
            components: vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]],
            explained_variance: vec![2.0, 0.5],
        };
        let text = pca_to_text(&map);
        assert_eq!(pca_from_text(&text).unwrap(), map);
        assert!(pca_from_text(&(text + "extra\n")).is_err());
    }

    proptest! {
        #[test]
        fn escaping_is_invertible(s in "[a-z\\\\\t\n\r ]{0,20}") {
            let e = escape(&s);
            prop_assert!(!e.contains('\t') && !e.contains('\n'));
            prop_assert_eq!(unescape(&e, 1).unwrap(), s);
        }

        #[test]
        fn any_finite_float_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
