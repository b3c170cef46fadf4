//! Minimal hand-rolled SVG charts for the length and position analyses.
//!
//! No plotting dependency: the handful of shapes needed here are easy to emit
//! directly, and fixed-precision formatting keeps the files byte-deterministic
//! for identical inputs.

use std::collections::BTreeMap;

use super::{BucketDimension, BucketedAccuracy};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 460.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.1}")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" \
             font-family=\"sans-serif\" font-size=\"13\">\n",
            fmt(WIDTH),
            fmt(HEIGHT)
        ));
        body.push_str(&format!(
            "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            fmt(WIDTH),
            fmt(HEIGHT)
        ));
        body.push_str(&format!(
            "<text x=\"{}\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            fmt(WIDTH / 2.0),
            esc(title)
        ));
        Canvas { body }
    }

    fn plot_width(&self) -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_height(&self) -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    /// Map accuracy in [0,1] to a y pixel.
    fn y(&self, accuracy: f64) -> f64 {
        MARGIN_TOP + (1.0 - accuracy.clamp(0.0, 1.0)) * self.plot_height()
    }

    fn axes(&mut self, y_label: &str) {
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = MARGIN_TOP;
        let y1 = HEIGHT - MARGIN_BOTTOM;
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(x0), fmt(y1), fmt(x1), fmt(y1)
        ));
        self.body.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(x0), fmt(y0), fmt(x0), fmt(y1)
        ));
        for tick in 0..=5 {
            let value = tick as f64 / 5.0;
            let y = self.y(value);
            self.body.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\"/>\n",
                fmt(x0), fmt(y), fmt(x1), fmt(y)
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
                fmt(x0 - 8.0),
                fmt(y + 4.0),
                fmt(value)
            ));
        }
        self.body.push_str(&format!(
            "<text x=\"18\" y=\"{}\" transform=\"rotate(-90 18 {})\" text-anchor=\"middle\">{}</text>\n",
            fmt(MARGIN_TOP + self.plot_height() / 2.0),
            fmt(MARGIN_TOP + self.plot_height() / 2.0),
            esc(y_label)
        ));
    }

    fn legend(&mut self, names: &[&str]) {
        let x = WIDTH - MARGIN_RIGHT + 14.0;
        for (i, name) in names.iter().enumerate() {
            let y = MARGIN_TOP + 10.0 + i as f64 * 20.0;
            let color = PALETTE[i % PALETTE.len()];
            self.body.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
                fmt(x),
                fmt(y - 10.0)
            ));
            self.body.push_str(&format!(
                "<text x=\"{}\" y=\"{}\">{}</text>\n",
                fmt(x + 18.0),
                fmt(y),
                esc(name)
            ));
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Group rows as model → bucket → accuracy, with buckets in first-seen
/// (already sorted) order.
fn group(rows: &[BucketedAccuracy]) -> (Vec<String>, BTreeMap<String, BTreeMap<String, f64>>) {
    let mut buckets: Vec<String> = Vec::new();
    let mut by_model: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for row in rows {
        if !buckets.contains(&row.bucket) {
            buckets.push(row.bucket.clone());
        }
        by_model
            .entry(row.model_id.clone())
            .or_default()
            .insert(row.bucket.clone(), row.accuracy);
    }
    (buckets, by_model)
}

/// Line plot of per-model accuracy across word-count bins.
pub fn length_line_chart(rows: &[BucketedAccuracy], title: &str) -> String {
    debug_assert!(rows.iter().all(|r| r.dimension == BucketDimension::Length));
    let (buckets, by_model) = group(rows);
    let mut canvas = Canvas::new(title);
    canvas.axes("accuracy");

    let n = buckets.len().max(1);
    let step = canvas.plot_width() / n as f64;
    let x_of = |idx: usize| MARGIN_LEFT + step * (idx as f64 + 0.5);

    for (idx, bucket) in buckets.iter().enumerate() {
        // Thin out x labels when there are many bins.
        if n <= 12 || idx % 2 == 0 {
            canvas.body.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                fmt(x_of(idx)),
                fmt(HEIGHT - MARGIN_BOTTOM + 18.0),
                esc(bucket)
            ));
        }
    }
    canvas.body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">word-count bin</text>\n",
        fmt(MARGIN_LEFT + canvas.plot_width() / 2.0),
        fmt(HEIGHT - 16.0)
    ));

    for (series_idx, values) in by_model.values().enumerate() {
        let color = PALETTE[series_idx % PALETTE.len()];
        let points: Vec<String> = buckets
            .iter()
            .enumerate()
            .filter_map(|(idx, bucket)| {
                values
                    .get(bucket)
                    .map(|&acc| format!("{},{}", fmt(x_of(idx)), fmt(canvas.y(acc))))
            })
            .collect();
        if points.len() > 1 {
            canvas.body.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                points.join(" ")
            ));
        }
        for point in &points {
            let (x, y) = point.split_once(',').expect("point format");
            canvas.body.push_str(&format!(
                "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
    }

    let names: Vec<&str> = by_model.keys().map(|s| s.as_str()).collect();
    canvas.legend(&names);
    canvas.finish()
}

/// Grouped bar plot of per-model accuracy across target positions.
pub fn position_bar_chart(rows: &[BucketedAccuracy], title: &str) -> String {
    debug_assert!(rows.iter().all(|r| r.dimension == BucketDimension::Position));
    let (buckets, by_model) = group(rows);
    let mut canvas = Canvas::new(title);
    canvas.axes("accuracy");

    let n_buckets = buckets.len().max(1);
    let n_models = by_model.len().max(1);
    let group_width = canvas.plot_width() / n_buckets as f64;
    let bar_width = (group_width * 0.8) / n_models as f64;

    for (bucket_idx, bucket) in buckets.iter().enumerate() {
        let group_x = MARGIN_LEFT + group_width * bucket_idx as f64;
        canvas.body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(group_x + group_width / 2.0),
            fmt(HEIGHT - MARGIN_BOTTOM + 18.0),
            esc(bucket)
        ));
        for (model_idx, (_, values)) in by_model.iter().enumerate() {
            let Some(&accuracy) = values.get(bucket) else {
                continue;
            };
            let color = PALETTE[model_idx % PALETTE.len()];
            let x = group_x + group_width * 0.1 + bar_width * model_idx as f64;
            let y = canvas.y(accuracy);
            let height = HEIGHT - MARGIN_BOTTOM - y;
            canvas.body.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\"/>\n",
                fmt(x),
                fmt(y),
                fmt(bar_width),
                fmt(height)
            ));
        }
    }
    canvas.body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">target position</text>\n",
        fmt(MARGIN_LEFT + canvas.plot_width() / 2.0),
        fmt(HEIGHT - 16.0)
    ));

    let names: Vec<&str> = by_model.keys().map(|s| s.as_str()).collect();
    canvas.legend(&names);
    canvas.finish()
}
