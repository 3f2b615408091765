//! Dependency-free SVG plot generation: axes with ticks, polylines, filled
//! bands, scatter points, bars, rug marks, vertical markers, and a legend.
//! Coordinates are formatted with fixed precision so output bytes are a pure
//! function of the data.

pub const PLOT_W: f64 = 640.0;
pub const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 52.0;

pub struct Plot {
    x_range: (f64, f64),
    y_range: (f64, f64),
    title: String,
    x_label: String,
    y_label: String,
    body: String,
    legend: Vec<(String, String)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn new(
        title: &str,
        x_label: &str,
        y_label: &str,
        x_range: (f64, f64),
        y_range: (f64, f64),
    ) -> Self {
        let pad = |r: (f64, f64)| {
            if r.1 > r.0 {
                r
            } else {
                (r.0 - 0.5, r.0 + 0.5)
            }
        };
        Plot {
            x_range: pad(x_range),
            y_range: pad(y_range),
            title: esc(title),
            x_label: esc(x_label),
            y_label: esc(y_label),
            body: String::new(),
            legend: Vec::new(),
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_range.0) / (self.x_range.1 - self.x_range.0)
            * (PLOT_W - MARGIN_L - MARGIN_R)
    }

    fn sy(&self, y: f64) -> f64 {
        PLOT_H - MARGIN_B
            - (y - self.y_range.0) / (self.y_range.1 - self.y_range.0)
                * (PLOT_H - MARGIN_T - MARGIN_B)
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64, dash: Option<&str>) {
        if pts.is_empty() {
            return;
        }
        let d: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y))).collect();
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        self.body.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash} points=\"{}\"/>\n",
            d.join(" ")
        ));
    }

    /// Filled region between a lower and an upper curve.
    pub fn band(&mut self, lower: &[(f64, f64)], upper: &[(f64, f64)], color: &str, opacity: f64) {
        if lower.is_empty() || upper.is_empty() {
            return;
        }
        let mut d = String::from("M");
        for &(x, y) in lower {
            d.push_str(&format!(" {:.2},{:.2}", self.sx(x), self.sy(y)));
        }
        for &(x, y) in upper.iter().rev() {
            d.push_str(&format!(" L {:.2},{:.2}", self.sx(x), self.sy(y)));
        }
        d.push('Z');
        self.body.push_str(&format!(
            "<path fill=\"{color}\" fill-opacity=\"{opacity:.2}\" stroke=\"none\" d=\"{d}\"/>\n"
        ));
    }

    pub fn scatter(&mut self, pts: &[(f64, f64)], color: &str, radius: f64) {
        for &(x, y) in pts {
            self.body.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n",
                self.sx(x),
                self.sy(y)
            ));
        }
    }

    /// Bars centered between edges, e.g. a success-fraction histogram.
    pub fn bars(&mut self, edges: &[f64], heights: &[f64], color: &str) {
        for (i, &h) in heights.iter().enumerate() {
            let x0 = self.sx(edges[i]);
            let x1 = self.sx(edges[i + 1]);
            let y0 = self.sy(0.0f64.max(self.y_range.0));
            let y1 = self.sy(h);
            self.body.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.55\" stroke=\"#333\" stroke-width=\"0.5\"/>\n",
                x0 + 0.5,
                y1.min(y0),
                (x1 - x0 - 1.0).max(0.5),
                (y0 - y1).abs()
            ));
        }
    }

    /// Short ticks along the bottom edge marking observation locations;
    /// successes up, failures down.
    pub fn rug(&mut self, xs: &[f64], up: &[bool], color: &str) {
        let base = PLOT_H - MARGIN_B;
        for (&x, &u) in xs.iter().zip(up) {
            let (y0, y1) = if u { (base - 7.0, base) } else { (base, base + 7.0) };
            self.body.push_str(&format!(
                "<line x1=\"{0:.2}\" y1=\"{y0:.2}\" x2=\"{0:.2}\" y2=\"{y1:.2}\" stroke=\"{color}\" stroke-width=\"0.7\" stroke-opacity=\"0.5\"/>\n",
                self.sx(x)
            ));
        }
    }

    /// Vertical marker with a small label at the top.
    pub fn vline(&mut self, x: f64, color: &str, label: &str) {
        let sx = self.sx(x);
        self.body.push_str(&format!(
            "<line x1=\"{sx:.2}\" y1=\"{:.2}\" x2=\"{sx:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1\" stroke-dasharray=\"4,3\"/>\n",
            MARGIN_T,
            PLOT_H - MARGIN_B
        ));
        self.body.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            sx + 3.0,
            MARGIN_T + 12.0,
            esc(label)
        ));
    }

    pub fn legend_entry(&mut self, color: &str, label: &str) {
        self.legend.push((color.to_string(), esc(label)));
    }

    fn ticks(lo: f64, hi: f64) -> Vec<f64> {
        let span = hi - lo;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 2.5, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|&s| span / s <= 6.0)
            .unwrap_or(mag * 10.0);
        let mut t = (lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= hi + 1e-9 * span {
            out.push(t);
            t += step;
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n"
        ));
        s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        // frame
        s.push_str(&format!(
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#222\"/>\n",
            PLOT_W - MARGIN_L - MARGIN_R,
            PLOT_H - MARGIN_T - MARGIN_B
        ));
        // ticks and labels
        for t in Self::ticks(self.x_range.0, self.x_range.1) {
            let x = self.sx(t);
            let y = PLOT_H - MARGIN_B;
            s.push_str(&format!(
                "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#222\"/>\n",
                y + 5.0
            ));
            s.push_str(&format!(
                "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{t:.3}</text>\n",
                y + 18.0
            ));
        }
        for t in Self::ticks(self.y_range.0, self.y_range.1) {
            let y = self.sy(t);
            s.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{MARGIN_L}\" y2=\"{y:.2}\" stroke=\"#222\"/>\n",
                MARGIN_L - 5.0
            ));
            s.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{t:.3}</text>\n",
                MARGIN_L - 8.0,
                y + 4.0
            ));
        }
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\" font-weight=\"bold\">{}</text>\n",
            0.5 * PLOT_W,
            self.title
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            0.5 * PLOT_W,
            PLOT_H - 12.0,
            self.x_label
        ));
        s.push_str(&format!(
            "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
            0.5 * PLOT_H,
            0.5 * PLOT_H,
            self.y_label
        ));
        // clipped body
        s.push_str(&format!(
            "<clipPath id=\"frame\"><rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.2}\" height=\"{:.2}\"/></clipPath>\n",
            PLOT_W - MARGIN_L - MARGIN_R,
            PLOT_H - MARGIN_T - MARGIN_B
        ));
        s.push_str("<g clip-path=\"url(#frame)\">\n");
        s.push_str(&self.body);
        s.push_str("</g>\n");
        // legend
        for (i, (color, label)) in self.legend.iter().enumerate() {
            let y = MARGIN_T + 16.0 + 16.0 * i as f64;
            let x = MARGIN_L + 10.0;
            s.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                x + 22.0
            ));
            s.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{label}</text>\n",
                x + 28.0,
                y + 4.0
            ));
        }
        s.push_str("</svg>\n");
        s
    }
}
