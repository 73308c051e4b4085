//! Aligned text tables and CSV reports.

use protolatent_core::cluster::Occupancy;
use protolatent_core::net::{Accuracy, EpochRecord};
use protolatent_core::proto::{pca_fit, ClassifyReport, PrototypeSet};
use protolatent_core::Error as CoreError;

use crate::error::Result;

/// Left-aligned first column, right-aligned rest, two spaces apart.
pub fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |row: &[String]| {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = width[i]) } else { format!("{c:>w$}", w = width[i]) })
            .collect();
        cells.join("  ").trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.1}"))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Per-class and total accuracy, one row per named result.
pub fn accuracy_table(rows: &[(String, Accuracy)]) -> String {
    let header = strings(&["model", "control %", "patient %", "total %", "samples"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, a)| {
            vec![
                name.clone(),
                pct(a.class(0)),
                pct(a.class(1)),
                format!("{:.1}", a.total()),
                a.samples().to_string(),
            ]
        })
        .collect();
    table(&header, &body)
}

/// Share of samples per cluster with the cluster's label.
pub fn occupancy_table(occ: &Occupancy, set: &PrototypeSet) -> String {
    let header = strings(&["cluster", "label", "samples", "share %"]);
    let body: Vec<Vec<String>> = occ
        .counts
        .iter()
        .zip(&occ.percentages)
        .enumerate()
        .map(|(i, (c, p))| {
            let label = set.prototypes.get(i).map_or("-".into(), |p| label_name(p.label).to_string());
            vec![format!("c{}", i + 1), label, c.to_string(), format!("{p:.1}")]
        })
        .collect();
    table(&header, &body)
}

pub fn label_name(label: u8) -> &'static str {
    if label == 0 {
        "control"
    } else {
        "patient"
    }
}

/// Samples per prototype for every subject, with the winning column
/// marked by `*`.
pub fn subject_table(report: &ClassifyReport, set: &PrototypeSet) -> String {
    let mut header = strings(&["subject", "label"]);
    header.extend(
        set.prototypes
            .iter()
            .enumerate()
            .map(|(i, p)| format!("c{}:{}", i + 1, if p.label == 0 { "C" } else { "P" })),
    );
    header.push("accuracy %".into());
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.subject.map_or("all".into(), |s| s.to_string()),
                label_name(r.label).to_string(),
            ];
            row.extend(r.counts.iter().enumerate().map(|(i, c)| {
                if i == r.max_column && *c > 0 {
                    format!("{c}*")
                } else {
                    c.to_string()
                }
            }));
            row.push(format!("{:.1}", r.accuracy));
            row
        })
        .collect();
    let mut out = table(&header, &body);
    out.push_str(&format!(
        "overall {:.1}% (control {}, patient {})\n",
        report.overall.total(),
        pct(report.overall.class(0)),
        pct(report.overall.class(1))
    ));
    out
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn history_csv(history: &[EpochRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "f1", "f2", "total", "train_acc", "valid_acc"]).map_err(csv_err)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.f1.to_string(),
            r.f2.to_string(),
            r.total.to_string(),
            r.train_acc.to_string(),
            opt(r.valid_acc),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| csv_err(e.into_error().into()))
}

fn csv_err(e: csv::Error) -> crate::CliError {
    crate::CliError::Config(format!("csv: {e}"))
}

/// Coordinates of every center on the first three principal components of
/// the set itself. Components beyond the rank of the centers are zero.
pub fn center_projection(set: &PrototypeSet) -> Result<Vec<[f64; 3]>> {
    let mut out = vec![[0.0; 3]; set.len()];
    if set.len() < 2 {
        return Ok(out);
    }
    let latents = protolatent_core::cluster::LatentSet::new(
        set.centers(),
        set.prototypes.iter().map(|p| p.label).collect(),
        "centers",
        "",
    )?;
    let mut k = set.dim.min(3);
    let map = loop {
        match pca_fit(&latents, k) {
            Ok(map) => break Some(map),
            Err(CoreError::RankDeficient { achievable, .. }) if achievable > 0 && achievable < k => k = achievable,
            Err(CoreError::RankDeficient { .. }) => break None,
            Err(e) => return Err(e.into()),
        }
    };
    if let Some(map) = map {
        for (row, p) in out.iter_mut().zip(&set.prototypes) {
            for (slot, x) in row.iter_mut().zip(map.project(&p.center)?) {
                *slot = x;
            }
        }
    }
    Ok(out)
}

/// `index, label, source, support, annotation, pc1..pc3, c1..cM`; an empty
/// set gives the header alone.
pub fn centers_csv(set: &PrototypeSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = strings(&["index", "label", "source", "support", "annotation", "pc1", "pc2", "pc3"]);
    header.extend((1..=set.dim).map(|i| format!("c{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, (p, pc)) in set.prototypes.iter().zip(center_projection(set)?).enumerate() {
        let mut row = vec![
            i.to_string(),
            label_name(p.label).to_string(),
            p.source.clone(),
            p.support.to_string(),
            p.annotation.clone(),
        ];
        row.extend(pc.iter().map(f64::to_string));
        row.extend(p.center.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| csv_err(e.into_error().into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use protolatent_core::proto::{pca_project, Prototype};

    fn set(centers: &[&[f64]]) -> PrototypeSet {
        let protos = centers
            .iter()
            .enumerate()
            .map(|(i, c)| Prototype {
                center: c.to_vec(),
                label: (i % 2) as u8,
                annotation: format!("note {i}"),
                source: "a".into(),
                support: 0.25,
            })
            .collect();
        PrototypeSet::new(protos, centers[0].len(), vec![]).unwrap()
    }

    #[test]
    fn empty_set_gives_a_header_only_csv() {
        let csv = String::from_utf8(centers_csv(&PrototypeSet::empty(2)).unwrap()).unwrap();
        assert_eq!(csv, "index,label,source,support,annotation,pc1,pc2,pc3,c1,c2\n");
    }

    #[test]
    fn ten_centers_give_ten_rows() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let csv = String::from_utf8(centers_csv(&set(&refs)).unwrap()).unwrap();
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        let recs: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
        assert_eq!(recs.len(), 10);
        assert_eq!(&recs[1][1], "patient");
        assert_eq!(&recs[1][2], "a");
    }

    #[test]
    fn projection_matches_an_independent_pca_projection() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| (0..5).map(|j| ((i * 3 + j * j) % 7) as f64).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = set(&refs);
        let coords = center_projection(&s).unwrap();
        let latents = protolatent_core::cluster::LatentSet::new(s.centers(), vec![0; 6], "x", "").unwrap();
        let projected = pca_project(&pca_fit(&latents, 3).unwrap(), &s).unwrap();
        for (i, p) in projected.prototypes.iter().enumerate() {
            for j in 0..3 {
                assert!((p.center[j] - coords[i][j]).abs() <= 1e-10);
            }
        }
        // pairwise distances agree too
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        for i in 0..6 {
            for j in 0..6 {
                let want = d(&projected.prototypes[i].center, &projected.prototypes[j].center);
                assert!((d(&coords[i], &coords[j]) - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn collinear_centers_pad_with_zeros() {
        let s = set(&[&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]]);
        let coords = center_projection(&s).unwrap();
        assert!(coords.iter().all(|c| c[1] == 0.0 && c[2] == 0.0));
        assert!((coords[2][0] - coords[0][0]).abs() > 3.0);
    }

    #[test]
    fn history_csv_has_the_fixed_columns() {
        let h = [EpochRecord {
            epoch: 0,
            f1: 0.5,
            f2: 0.0,
            total: 0.5,
            train_acc: 50.0,
            valid_acc: None,
        }];
        let csv = String::from_utf8(history_csv(&h).unwrap()).unwrap();
        assert_eq!(csv, "epoch,f1,f2,total,train_acc,valid_acc\n0,0.5,0,0.5,50,\n");
    }

    #[test]
    fn tables_align_columns() {
        let t = table(&strings(&["a", "bb"]), &[strings(&["long", "1"]), strings(&["x", "22"])]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a     bb");
        assert_eq!(lines[2], "long   1");
        assert_eq!(lines[3], "x     22");
    }
}
