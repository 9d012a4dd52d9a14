//! Analysis, comparison and sweep reports in table, CSV, JSON and SVG form.

use std::fmt::Write as _;

use mmtrace_core::metrics::{bucket_metrics, per_layer_metrics, Bucket, BucketMetrics, BucketValue};
use mmtrace_core::toy::SweepRow;
use mmtrace_core::trace::AttentionTrace;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::number::sig9;

/// CSV header of sweep reports. Column order is part of the interface.
pub const SWEEP_CSV_HEADER: &str = "sweep,param,seed,bucket,mdi,aei_text,aei_nontext,n_text,n_nontext";

/// Token counts of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counts {
    /// `|T|`.
    pub text: usize,
    /// `|O|`.
    pub nontext: usize,
    /// Positions excluded from both sets.
    pub special: usize,
}

/// Metrics of one bucket as reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketEntry {
    /// Layers averaged into the bucket.
    pub layers: Vec<usize>,
    /// Modality dominance index.
    pub mdi: f64,
    /// Text attention efficiency.
    pub aei_text: f64,
    /// Non-text attention efficiency.
    pub aei_nontext: f64,
    /// Mean renormalised text mass.
    pub a_text: f64,
}

impl From<&BucketValue> for BucketEntry {
    fn from(v: &BucketValue) -> Self {
        Self {
            layers: v.layers.clone(),
            mdi: v.mdi,
            aei_text: v.aei_text,
            aei_nontext: v.aei_nontext,
            a_text: v.mass.a_text,
        }
    }
}

/// Early, middle and late entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Buckets {
    /// First two layers.
    pub early: BucketEntry,
    /// Middle two layers.
    pub middle: BucketEntry,
    /// Last two layers.
    pub late: BucketEntry,
}

impl Buckets {
    fn new(m: &BucketMetrics) -> Self {
        Self { early: (&m.early).into(), middle: (&m.middle).into(), late: (&m.late).into() }
    }

    /// Entry of one bucket.
    pub fn get(&self, b: Bucket) -> &BucketEntry {
        match b {
            Bucket::Early => &self.early,
            Bucket::Middle => &self.middle,
            Bucket::Late => &self.late,
        }
    }
}

/// Metrics of one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerEntry {
    /// Layer index.
    pub layer: usize,
    /// Renormalised text mass.
    pub a_text: f64,
    /// Modality dominance index.
    pub mdi: f64,
    /// Text attention efficiency.
    pub aei_text: f64,
}

/// Everything `analyze` reports about one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    /// Token counts.
    pub counts: Counts,
    /// Bucket metrics.
    pub buckets: Buckets,
    /// Per-layer metrics.
    pub per_layer: Vec<LayerEntry>,
    /// Run envelope; always present in JSON written by the CLI.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl AnalysisReport {
    /// Computes the report of a metric-eligible trace.
    pub fn from_trace(trace: &AttentionTrace) -> mmtrace_core::Result<Self> {
        let m = bucket_metrics(trace)?;
        let per_layer = per_layer_metrics(trace)?
            .into_iter()
            .map(|l| LayerEntry { layer: l.layer, a_text: l.mass.a_text, mdi: l.mdi, aei_text: l.aei_text })
            .collect();
        Ok(Self {
            counts: Counts { text: m.counts.n_text, nontext: m.counts.n_nontext, special: m.n_special },
            buckets: Buckets::new(&m),
            per_layer,
            manifest: None,
        })
    }

    /// Early/Middle/Late by MDI/AEI table; AEI is the text efficiency.
    pub fn to_table(&self) -> String {
        let c = self.counts;
        let mut s = format!("tokens: text {}, nontext {}, special {}\n\n", c.text, c.nontext, c.special);
        let _ = writeln!(s, "{:<28}{:<28}Late", "Early", "Middle");
        let _ = writeln!(s, "{}", "MDI           AEI           ".repeat(3).trim_end());
        let mut row = String::new();
        for b in Bucket::ALL {
            let e = self.buckets.get(b);
            let _ = write!(row, "{:<14}{:<14}", format!("{:.9}", e.mdi), format!("{:.9}", e.aei_text));
        }
        let _ = writeln!(s, "{}", row.trim_end());
        s
    }

    /// One CSV row per bucket.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bucket,layers,mdi,aei_text,aei_nontext,a_text,n_text,n_nontext,n_special\n");
        for b in Bucket::ALL {
            let e = self.buckets.get(b);
            let layers: Vec<String> = e.layers.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                b.as_str(),
                layers.join(" "),
                sig9(e.mdi),
                sig9(e.aei_text),
                sig9(e.aei_nontext),
                sig9(e.a_text),
                self.counts.text,
                self.counts.nontext,
                self.counts.special
            );
        }
        s
    }
}

/// One bucket of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketDelta {
    /// Bucket name.
    pub bucket: Bucket,
    /// MDI of the first trace.
    pub mdi_a: f64,
    /// MDI of the second trace.
    pub mdi_b: f64,
    /// `mdi_b - mdi_a`.
    pub mdi_delta: f64,
    /// Text AEI of the first trace.
    pub aei_text_a: f64,
    /// Text AEI of the second trace.
    pub aei_text_b: f64,
    /// `aei_text_b - aei_text_a`.
    pub aei_text_delta: f64,
    /// Non-text AEI of the first trace.
    pub aei_nontext_a: f64,
    /// Non-text AEI of the second trace.
    pub aei_nontext_b: f64,
    /// `aei_nontext_b - aei_nontext_a`.
    pub aei_nontext_delta: f64,
    /// `|mdi_b - 1| - |mdi_a - 1|`; negative means `b` is more balanced.
    pub balance_change: f64,
}

/// `compare` output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    /// Counts of the first trace.
    pub counts_a: Counts,
    /// Counts of the second trace.
    pub counts_b: Counts,
    /// Early, middle and late deltas.
    pub buckets: Vec<BucketDelta>,
    /// Run envelope.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl CompareReport {
    /// Per-bucket differences from `a` to `b`.
    pub fn new(a: &AnalysisReport, b: &AnalysisReport) -> Self {
        let buckets = Bucket::ALL
            .iter()
            .map(|&bucket| {
                let (x, y) = (a.buckets.get(bucket), b.buckets.get(bucket));
                BucketDelta {
                    bucket,
                    mdi_a: x.mdi,
                    mdi_b: y.mdi,
                    mdi_delta: y.mdi - x.mdi,
                    aei_text_a: x.aei_text,
                    aei_text_b: y.aei_text,
                    aei_text_delta: y.aei_text - x.aei_text,
                    aei_nontext_a: x.aei_nontext,
                    aei_nontext_b: y.aei_nontext,
                    aei_nontext_delta: y.aei_nontext - x.aei_nontext,
                    balance_change: (y.mdi - 1.0).abs() - (x.mdi - 1.0).abs(),
                }
            })
            .collect();
        Self { counts_a: a.counts, counts_b: b.counts, buckets, manifest: None }
    }

    /// One row per bucket.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "a: text {}, nontext {}, special {}\nb: text {}, nontext {}, special {}\n\n",
            self.counts_a.text,
            self.counts_a.nontext,
            self.counts_a.special,
            self.counts_b.text,
            self.counts_b.nontext,
            self.counts_b.special
        );
        let _ = writeln!(
            s,
            "{:<8}{:>15}{:>15}{:>15}{:>15}{:>15}{:>15}{:>15}",
            "bucket", "MDI a", "MDI b", "dMDI", "AEI a", "AEI b", "dAEI", "d|MDI-1|"
        );
        for d in &self.buckets {
            let _ = writeln!(
                s,
                "{:<8}{:>15.9}{:>15.9}{:>15.9}{:>15.9}{:>15.9}{:>15.9}{:>15.9}",
                d.bucket.as_str(),
                d.mdi_a,
                d.mdi_b,
                d.mdi_delta,
                d.aei_text_a,
                d.aei_text_b,
                d.aei_text_delta,
                d.balance_change
            );
        }
        s
    }

    /// One CSV row per bucket.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "bucket,mdi_a,mdi_b,mdi_delta,aei_text_a,aei_text_b,aei_text_delta,aei_nontext_a,aei_nontext_b,aei_nontext_delta,balance_change\n",
        );
        for d in &self.buckets {
            let v = [
                d.mdi_a,
                d.mdi_b,
                d.mdi_delta,
                d.aei_text_a,
                d.aei_text_b,
                d.aei_text_delta,
                d.aei_nontext_a,
                d.aei_nontext_b,
                d.aei_nontext_delta,
                d.balance_change,
            ];
            let v: Vec<String> = v.iter().map(|x| sig9(*x)).collect();
            let _ = writeln!(s, "{},{}", d.bucket.as_str(), v.join(","));
        }
        s
    }
}

/// Fraction of seeds showing the expected direction of effect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    /// What was counted.
    pub property: String,
    /// Seeds with the property.
    pub hits: usize,
    /// Seeds in the sweep.
    pub seeds: usize,
    /// `hits / seeds`.
    pub fraction: f64,
}

impl SweepSummary {
    /// Human-readable summary line.
    pub fn line(&self) -> String {
        format!("{}: {}/{} seeds ({:.3})", self.property, self.hits, self.seeds, self.fraction)
    }
}

/// JSON mirror of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Direction-of-effect summary, when the parameters allow one.
    pub summary: Option<SweepSummary>,
    /// One row per (param, seed, bucket), in that order.
    pub rows: Vec<SweepRow>,
    /// Run envelope.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl SweepReport {
    /// CSV with [`SWEEP_CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.sweep.as_str(),
                sig9(r.param),
                r.seed,
                r.bucket.as_str(),
                sig9(r.mdi),
                sig9(r.aei_text),
                sig9(r.aei_nontext),
                r.n_text,
                r.n_nontext
            );
        }
        s
    }

    /// Aligned rows plus the summary line.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<12}{:>12}{:>6}{:>8}{:>15}{:>15}{:>15}{:>8}{:>10}\n",
            "sweep", "param", "seed", "bucket", "mdi", "aei_text", "aei_nontext", "n_text", "n_nontext"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12}{:>12}{:>6}{:>8}{:>15.9}{:>15.9}{:>15.9}{:>8}{:>10}",
                r.sweep.as_str(),
                r.param,
                r.seed,
                r.bucket.as_str(),
                r.mdi,
                r.aei_text,
                r.aei_nontext,
                r.n_text,
                r.n_nontext
            );
        }
        if let Some(summary) = &self.summary {
            let _ = writeln!(s, "\n{}", summary.line());
        }
        s
    }

    /// Bar chart of the seed-mean late MDI for each parameter value.
    pub fn to_svg(&self) -> String {
        let mut params: Vec<f64> = Vec::new();
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.bucket == Bucket::Late) {
            match params.iter().position(|p| *p == r.param) {
                Some(i) => {
                    sums[i].0 += r.mdi;
                    sums[i].1 += 1;
                }
                None => {
                    params.push(r.param);
                    sums.push((r.mdi, 1));
                }
            }
        }
        let means: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
        let label = match self.rows.first().map(|r| r.sweep.as_str()) {
            Some("prune") => "reduction rate",
            _ => "replication factor",
        };
        bar_chart(&params, &means, label, "mean late-layer MDI")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear-scale bar chart: one `<rect>` per bar and nothing else drawn
/// with `<rect>`, so bars can be counted.
pub fn bar_chart(labels: &[f64], values: &[f64], x_label: &str, y_label: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const LEFT: f64 = 70.0;
    const BOTTOM: f64 = 50.0;
    const TOP: f64 = 20.0;
    let plot_w = W - LEFT - 20.0;
    let plot_h = H - BOTTOM - TOP;
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let max = if max > 0.0 { max * 1.1 } else { 1.0 };
    let slot = plot_w / labels.len().max(1) as f64;
    let y0 = H - BOTTOM;

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>", W - 20.0);
    let _ = writeln!(s, "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{y0}\" stroke=\"black\"/>");
    for k in 0..=4 {
        let v = max * f64::from(k) / 4.0;
        let y = y0 - plot_h * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>",
            LEFT - 6.0,
            y + 4.0,
            v
        );
    }
    for (i, (l, v)) in labels.iter().zip(values).enumerate() {
        let h = plot_h * v.max(0.0) / max;
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\"><title>{l}: {}</title></rect>",
            y0 - h,
            slot * 0.7,
            sig9(*v)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{l}</text>",
            x + slot * 0.35,
            y0 + 16.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        LEFT + plot_w / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture;

    #[test]
    fn table_prints_nine_decimals() {
        let r = AnalysisReport::from_trace(&fixture("table2-row0").unwrap()).unwrap();
        let t = r.to_table();
        assert!(t.contains("17.370000000"), "{t}");
        assert!(t.contains("10.230000000"));
        assert!(t.contains("1.580000000"));
    }

    #[test]
    fn self_comparison_is_zero() {
        let r = AnalysisReport::from_trace(&fixture("table2-row95").unwrap()).unwrap();
        let c = CompareReport::new(&r, &r);
        assert!(c.buckets.iter().all(|d| d.mdi_delta == 0.0 && d.balance_change == 0.0 && d.aei_text_delta == 0.0));
    }

    #[test]
    fn chart_has_one_rect_per_bar() {
        let svg = bar_chart(&[1.0, 5.0, 10.0], &[2.0, 3.0, 4.0], "n", "MDI");
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
