//! Aggregates classify CSVs into one markdown table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use residuum::metrics::CSV_HEADER;

use crate::error::{io_err, CliError};

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    /// File name the row came from.
    pub source: String,
    pub embedding: String,
    pub model: String,
    pub n_test: Option<u64>,
    pub accuracy: Option<f64>,
    pub f1_macro: Option<f64>,
    pub auc_macro: Option<f64>,
    /// Why the row is incomplete; empty for a well-formed row.
    pub problems: Vec<String>,
}

fn number<T: std::str::FromStr>(
    field: Option<&str>,
    name: &str,
    problems: &mut Vec<String>,
) -> Option<T> {
    match field.map(str::trim) {
        None | Some("") => {
            problems.push(format!("missing {name}"));
            None
        }
        Some(s) => match s.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                problems.push(format!("unparsable {name} `{s}`"));
                None
            }
        },
    }
}

/// Parses one classify CSV. Structural problems are recorded on the row
/// rather than failing the whole report.
pub fn parse_run(source: &str, text: &str) -> RunRow {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut problems = Vec::new();
    let header = lines.next();
    if header != Some(CSV_HEADER) {
        problems.push("unexpected header".to_string());
    }
    let line = lines.next().unwrap_or_default();
    if line.is_empty() {
        problems.push("no data row".to_string());
    }
    let fields: Vec<&str> = line.split(',').collect();
    let stem = source.trim_end_matches(".csv");
    let (stem_emb, stem_model) = stem.rsplit_once('_').unwrap_or((stem, ""));
    let text_field = |i: usize, fallback: &str| {
        fields
            .get(i)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .unwrap_or(fallback)
            .to_string()
    };
    let embedding = text_field(0, stem_emb);
    let model = text_field(1, stem_model);
    let n_test = number(fields.get(2).copied(), "n_test", &mut problems);
    let accuracy = number(fields.get(3).copied(), "accuracy", &mut problems);
    let f1_macro = number(fields.get(4).copied(), "f1_macro", &mut problems);
    let auc_macro = number(fields.get(5).copied(), "auc_macro", &mut problems);
    if fields.len() > 6 {
        problems.push(format!("{} fields, expected 6", fields.len()));
    }
    RunRow {
        source: source.to_string(),
        embedding,
        model,
        n_test,
        accuracy,
        f1_macro,
        auc_macro,
        problems,
    }
}

fn rank(order: &[&str], s: &str) -> usize {
    order.iter().position(|o| *o == s).unwrap_or(order.len())
}

/// Reads every `*.csv` under `dir`, sorted by model then embedding.
pub fn collect(dir: &Path) -> Result<Vec<RunRow>, CliError> {
    let no_runs = || CliError::Data(format!("no runs found in {}", dir.display()));
    if !dir.is_dir() {
        return Err(no_runs());
    }
    let mut rows = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        rows.push(parse_run(&name, &text));
    }
    if rows.is_empty() {
        return Err(no_runs());
    }
    let models = ["logreg", "forest"];
    let embeddings = ["text", "audio", "residual"];
    rows.sort_by(|a, b| {
        (
            rank(&models, &a.model),
            &a.model,
            rank(&embeddings, &a.embedding),
            &a.embedding,
            &a.source,
        )
            .cmp(&(
                rank(&models, &b.model),
                &b.model,
                rank(&embeddings, &b.embedding),
                &b.embedding,
                &b.source,
            ))
    });
    Ok(rows)
}

fn model_name(m: &str) -> &str {
    match m {
        "logreg" => "Logistic Regression",
        "forest" => "Random Forest",
        other => other,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

pub fn render(rows: &[RunRow]) -> String {
    let mut out = String::from("# Tone classification results\n\n");
    out.push_str(
        "| Model | Embedding | Accuracy | F1 (macro) | AUC-ROC (macro) | Test rows | Flag |\n",
    );
    out.push_str("|---|---|---:|---:|---:|---:|---|\n");
    for r in rows {
        let flag = if r.problems.is_empty() {
            ""
        } else {
            "malformed"
        };
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            model_name(&r.model),
            r.embedding,
            cell(r.accuracy),
            cell(r.f1_macro),
            cell(r.auc_macro),
            r.n_test
                .map_or_else(|| "n/a".to_string(), |n| n.to_string()),
            flag
        )
        .unwrap();
    }
    let flagged: Vec<&RunRow> = rows.iter().filter(|r| !r.problems.is_empty()).collect();
    if !flagged.is_empty() {
        out.push_str("\n## Flagged rows\n\n");
        for r in flagged {
            writeln!(out, "- `{}`: {}", r.source, r.problems.join("; ")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_row_parses() {
        let r = parse_run(
            "audio_logreg.csv",
            &format!("{CSV_HEADER}\naudio,logreg,317,0.853,0.850,0.980\n"),
        );
        assert!(r.problems.is_empty());
        assert_eq!(r.n_test, Some(317));
        assert_eq!(r.auc_macro, Some(0.98));
    }

    #[test]
    fn missing_auc_is_flagged() {
        let r = parse_run(
            "text_forest.csv",
            &format!("{CSV_HEADER}\ntext,forest,317,0.0,0.0,\n"),
        );
        assert_eq!(r.problems, vec!["missing auc_macro".to_string()]);
        assert_eq!(r.accuracy, Some(0.0));
        let md = render(&[r]);
        assert!(md.contains("| n/a | 317 | malformed |"));
        assert!(md.contains("`text_forest.csv`: missing auc_macro"));
    }

    #[test]
    fn garbage_keeps_names_from_file() {
        let r = parse_run("residual_forest.csv", "nonsense");
        assert_eq!(r.embedding, "residual");
        assert_eq!(r.model, "forest");
        assert!(!r.problems.is_empty());
    }
}
