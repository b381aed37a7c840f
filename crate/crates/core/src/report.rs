//! Report assembly and rendering.
//!
//! The structured form is JSON with every real printed at six decimals and
//! keys in declaration order, so identical inputs give identical bytes. The
//! human-readable form is Markdown.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::metrics::{ConfusionMatrix, DatasetMetrics};
use crate::rater::{spearman, CorrelationResult, RaterError, RepeatedEvalResult, SweepResult};

/// Content digest of one input file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSection {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized shares, rounded to four decimals.
    pub row_normalized: Vec<Vec<f64>>,
}

impl From<&ConfusionMatrix> for ConfusionSection {
    fn from(cm: &ConfusionMatrix) -> Self {
        Self {
            labels: cm.labels.iter().map(|l| l.raw().to_string()).collect(),
            counts: cm.counts.clone(),
            row_normalized: cm
                .row_normalized()
                .into_iter()
                .map(|row| row.into_iter().map(|v| round_to(v, 4)).collect())
                .collect(),
        }
    }
}

/// Everything known about one annotation task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task_name: String,
    pub generated_from: Vec<InputDigest>,
    pub dataset_metrics: DatasetMetrics,
    pub confusion: ConfusionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater: Option<RepeatedEvalResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCorrelation {
    /// What is being compared, e.g. `accuracy` or `f1`.
    pub metric: String,
    pub tasks: Vec<String>,
    pub result: CorrelationResult,
}

/// One or more task reports, plus cross-task rank correlations between
/// annotation quality and rater quality when enough tasks are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub reports: Vec<Report>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<NamedCorrelation>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("task {0}: fragments disagree on {1}")]
    Conflict(String, &'static str),
    #[error("malformed structured report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Rater(#[from] RaterError),
}

impl ReportBundle {
    /// Merges per-stage fragments that share a task name; tasks come out
    /// sorted by name and digests sorted and deduplicated.
    pub fn merge(fragments: Vec<Report>) -> Result<Self, ReportError> {
        let mut reports: Vec<Report> = Vec::new();
        for frag in fragments {
            match reports.iter_mut().find(|r| r.task_name == frag.task_name) {
                None => reports.push(frag),
                Some(existing) => {
                    if existing.dataset_metrics != frag.dataset_metrics || existing.confusion != frag.confusion {
                        return Err(ReportError::Conflict(frag.task_name, "annotation metrics"));
                    }
                    existing.generated_from.extend(frag.generated_from);
                    merge_section(&mut existing.rater, frag.rater, &existing.task_name, "rater")?;
                    merge_section(&mut existing.sweep, frag.sweep, &existing.task_name, "sweep")?;
                }
            }
        }
        for r in &mut reports {
            r.generated_from.sort();
            r.generated_from.dedup();
        }
        reports.sort_by(|a, b| a.task_name.cmp(&b.task_name));
        let correlations = cross_task_correlations(&reports)?;
        Ok(Self { reports, correlations })
    }
}

fn merge_section<T: PartialEq>(mine: &mut Option<T>, theirs: Option<T>, task: &str, what: &'static str) -> Result<(), ReportError> {
    match (mine.as_ref(), theirs) {
        (_, None) => Ok(()),
        (None, Some(t)) => {
            *mine = Some(t);
            Ok(())
        }
        (Some(m), Some(t)) if *m == t => Ok(()),
        _ => Err(ReportError::Conflict(task.to_string(), what)),
    }
}

/// Rank correlation of annotation accuracy / weighted F1 against the
/// rater's mean accuracy / F1, over tasks that have both (at least three).
fn cross_task_correlations(reports: &[Report]) -> Result<Option<Vec<NamedCorrelation>>, ReportError> {
    let rated: Vec<(&Report, &RepeatedEvalResult)> =
        reports.iter().filter_map(|r| r.rater.as_ref().map(|x| (r, x))).collect();
    if rated.len() < 3 {
        return Ok(None);
    }
    let tasks: Vec<String> = rated.iter().map(|(r, _)| r.task_name.clone()).collect();
    let mut out = Vec::new();
    let pairs: [(&str, fn(&Report, &RepeatedEvalResult) -> (f64, f64)); 2] = [
        ("accuracy", |r, x| (r.dataset_metrics.accuracy, x.accuracy_mean)),
        ("f1", |r, x| (r.dataset_metrics.w_f1, x.f1_mean)),
    ];
    for (metric, get) in pairs {
        let (a, b): (Vec<f64>, Vec<f64>) = rated.iter().map(|(r, x)| get(r, x)).unzip();
        match spearman(&a, &b) {
            Ok(result) => out.push(NamedCorrelation {
                metric: metric.to_string(),
                tasks: tasks.clone(),
                result,
            }),
            Err(RaterError::ConstantInput) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(out))
}

pub fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// `ratio` as a percentage string with `decimals` places, rounding half
/// away from zero on the decimal expansion.
pub fn percent(ratio: f64, decimals: usize) -> String {
    format!("{}%", fixed_half_away(ratio * 100.0, decimals))
}

fn fixed_half_away(x: f64, decimals: usize) -> String {
    // Read the value at 12 significant fractional digits first so that
    // binary noise such as 89.55999999999 does not decide the rounding.
    let text = format!("{:.12}", x.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes().take(decimals)).map(|b| b - b'0').collect();
    let next = frac_part.as_bytes().get(decimals).map_or(0, |b| b - b'0');
    if next >= 5 {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - decimals;
    let mut out = String::new();
    if x < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    for d in &digits[..split] {
        out.push((b'0' + d) as char);
    }
    if decimals > 0 {
        out.push('.');
        for d in &digits[split..] {
            out.push((b'0' + d) as char);
        }
    }
    out
}

/// Pretty JSON formatter that prints every float with six decimals.
struct SixDecimals<'a>(PrettyFormatter<'a>);

impl Formatter for SixDecimals<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let value = if value == 0.0 { 0.0 } else { value };
        write!(writer, "{value:.6}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any result type as pretty JSON with six-decimal reals and a
/// trailing newline.
pub fn to_structured<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SixDecimals(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn from_structured<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ReportError> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Structured,
    HumanReadable,
}

pub fn emit_report(bundle: &ReportBundle, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => to_structured(bundle),
        ReportFormat::HumanReadable => render_markdown(bundle),
    }
}

fn render_markdown(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    for (i, r) in bundle.reports.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        render_task(&mut out, r);
    }
    if let Some(corrs) = &bundle.correlations {
        out.push_str("\n## Rank correlation: annotation vs. rater\n\n");
        out.push_str("| Metric | Tasks | rho | p-value | Method |\n|---|---|---|---|---|\n");
        for c in corrs {
            let method = match c.result.method {
                crate::rater::CorrelationMethod::ExactPermutation => "exact permutation",
                crate::rater::CorrelationMethod::TApproximation => "t approximation",
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                c.metric,
                c.tasks.len(),
                fixed_half_away(c.result.rho, 3),
                fixed_half_away(c.result.p_value, 4),
                method
            );
        }
    }
    out
}

fn render_task(out: &mut String, r: &Report) {
    let m = &r.dataset_metrics;
    let _ = writeln!(out, "# Annotation report: {}\n", r.task_name);
    out.push_str("## Overall\n\n");
    out.push_str("| Items | Parse rate | w-Recall (Accuracy) | w-Precision | w-F1 |");
    if m.strict_accuracy.is_some() {
        out.push_str(" Strict accuracy |");
    }
    out.push_str("\n|---|---|---|---|---|");
    if m.strict_accuracy.is_some() {
        out.push_str("---|");
    }
    let _ = write!(
        out,
        "\n| {} | {} | {} | {} | {} |",
        m.n_pairs,
        percent(m.parse_rate, 2),
        percent(m.w_recall, 2),
        percent(m.w_precision, 2),
        percent(m.w_f1, 2)
    );
    if let Some(s) = m.strict_accuracy {
        let _ = write!(out, " {} |", percent(s, 2));
    }
    out.push_str("\n\n## Per label\n\n| Label | Support | Recall | Precision | F1 |\n|---|---|---|---|---|\n");
    for l in &m.per_label {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            l.label,
            l.support,
            percent(l.recall, 2),
            percent(l.precision, 2),
            percent(l.f1, 2)
        );
    }

    let c = &r.confusion;
    out.push_str("\n## Confusion matrix (rows: human, columns: model)\n\n| |");
    for l in &c.labels {
        let _ = write!(out, " {l} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(c.labels.len()));
    out.push('\n');
    for (label, row) in c.labels.iter().zip(&c.row_normalized) {
        let _ = write!(out, "| {label} |");
        for v in row {
            let _ = write!(out, " {} |", percent(*v, 1));
        }
        out.push('\n');
    }

    if let Some(x) = &r.rater {
        out.push_str("\n## Rater (repeated holdout)\n\n");
        out.push_str("| Classifier | Repeats | Split | Seed | Accuracy mean (std) | F1 mean (std) | Degenerate splits |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} ({}) | {} ({}) | {} |",
            classifier_name(&x.spec),
            x.n_repeats,
            fixed_half_away(x.split_fraction, 2),
            x.seed,
            percent(x.accuracy_mean, 2),
            percent(x.accuracy_std, 2),
            percent(x.f1_mean, 2),
            percent(x.f1_std, 2),
            x.n_degenerate()
        );
    }

    if let Some(s) = &r.sweep {
        out.push_str("\n## Training-proportion sweep (F1)\n\n");
        let _ = writeln!(
            out,
            "{} repeats per proportion, {} classifier, seed {}.\n",
            s.n_repeats,
            classifier_name(&s.spec),
            s.seed
        );
        out.push_str("| Proportion | Items | Mean | Std | Q1 | Median | Q3 |\n|---|---|---|---|---|---|---|\n");
        for st in &s.stats {
            let mark = if s.min_sufficient == Some(st.proportion) { " *" } else { "" };
            let _ = writeln!(
                out,
                "| {}{} | {} | {} | {} | {} | {} | {} |",
                fixed_half_away(st.proportion, 2),
                mark,
                st.n_sampled,
                percent(st.f1_mean, 2),
                percent(st.f1_std, 2),
                percent(st.f1_quartiles[0], 2),
                percent(st.f1_quartiles[1], 2),
                percent(st.f1_quartiles[2], 2)
            );
        }
        if s.min_sufficient.is_some() {
            let _ = writeln!(
                out,
                "\n\\* smallest proportion within {} of the full-data F1 ({}).",
                percent(s.gap_threshold, 2),
                percent(s.full_f1, 2)
            );
        } else {
            out.push_str("\nNo proportion reaches the full-data F1 within the gap.\n");
        }
    }

    out.push_str("\n## Inputs\n\n| Role | File | SHA-256 |\n|---|---|---|\n");
    for d in &r.generated_from {
        let _ = writeln!(out, "| {} | {} | `{}` |", d.role, d.name, d.sha256);
    }
}

fn classifier_name(spec: &crate::rater::ClassifierSpec) -> &'static str {
    match spec {
        crate::rater::ClassifierSpec::LogisticRegression(_) => "logistic regression",
        crate::rater::ClassifierSpec::RandomForest(_) => "random forest",
    }
}
