//! Self-contained SVG renderers: the output-race trace plot (with a
//! magnified inset around the decisive crossings) and the pairwise
//! distance histogram with its Gaussian fit overlay. Plain-text SVG is
//! the sole plot format; files embed the same provenance comment as the
//! CSV artifacts.

use molpuf::metrics::GaussianFit;

use crate::config::ExperimentConfig;
use crate::experiments::TraceOutcome;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

const TOP_COLOR: &str = "#d62728";
const BOTTOM_COLOR: &str = "#1f77b4";
const GRID_COLOR: &str = "#cccccc";
const TEXT_COLOR: &str = "#222222";

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    tmin: f64,
    tmax: f64,
    cmin: f64,
    cmax: f64,
}

impl Frame {
    fn px(&self, t: f64) -> f64 {
        self.x0 + (t - self.tmin) / (self.tmax - self.tmin) * self.w
    }
    fn py(&self, c: f64) -> f64 {
        self.y0 + self.h - (c - self.cmin) / (self.cmax - self.cmin) * self.h
    }
    fn polyline(&self, points: impl Iterator<Item = (f64, f64)>, color: &str, width: f64) -> String {
        let coords: Vec<String> = points
            .map(|(t, c)| format!("{:.2},{:.2}", self.px(t), self.py(c)))
            .collect();
        format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n",
            coords.join(" ")
        )
    }
}

fn svg_open(config: &ExperimentConfig) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <!-- config_hash={} seed={} -->\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n",
        config.hash(),
        config.seed
    )
}

fn text(x: f64, y: f64, size: f64, anchor: &str, content: &str) -> String {
    format!(
        "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" text-anchor=\"{anchor}\" \
         fill=\"{TEXT_COLOR}\">{content}</text>\n"
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, x_ticks: usize) {
    out.push_str(&format!(
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"{TEXT_COLOR}\" stroke-width=\"1\"/>\n",
        frame.x0, frame.y0, frame.w, frame.h
    ));
    for i in 0..=x_ticks {
        let t = frame.tmin + (frame.tmax - frame.tmin) * i as f64 / x_ticks as f64;
        let x = frame.px(t);
        let y1 = frame.y0 + frame.h;
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{y1:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"{TEXT_COLOR}\"/>\n",
            y1 + 5.0
        ));
        out.push_str(&text(x, y1 + 20.0, 12.0, "middle", &format!("{t:.3}")));
    }
    for i in 0..=4 {
        let c = frame.cmin + (frame.cmax - frame.cmin) * i as f64 / 4.0;
        let y = frame.py(c);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"{GRID_COLOR}\" stroke-dasharray=\"2,4\"/>\n",
            frame.x0, frame.x0 + frame.w
        ));
        out.push_str(&text(frame.x0 - 8.0, y + 4.0, 12.0, "end", &format!("{c:.0}")));
    }
    out.push_str(&text(
        frame.x0 + frame.w / 2.0,
        frame.y0 + frame.h + 42.0,
        14.0,
        "middle",
        x_label,
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" \
         fill=\"{TEXT_COLOR}\" transform=\"rotate(-90 {:.2} {:.2})\">{y_label}</text>\n",
        frame.x0 - 48.0,
        frame.y0 + frame.h / 2.0,
        frame.x0 - 48.0,
        frame.y0 + frame.h / 2.0
    ));
}

/// Renders the two output-rail trajectories, the decision threshold, the
/// crossing markers, the response label, and a magnified inset around
/// the crossings that decide the race.
pub fn trace_svg(config: &ExperimentConfig, trace: &TraceOutcome) -> String {
    let t_end = trace.samples.last().map(|s| s.0).unwrap_or(1.0).max(1e-12);
    let frame = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP,
        w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        h: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
        tmin: 0.0,
        tmax: t_end,
        cmin: 0.0,
        cmax: 105.0,
    };

    let mut out = svg_open(config);
    axes(&mut out, &frame, "time (s)", "concentration (nM)", 5);

    // Threshold rule.
    let ty = frame.py(trace.threshold);
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{ty:.2}\" x2=\"{:.2}\" y2=\"{ty:.2}\" stroke=\"#888888\" \
         stroke-dasharray=\"6,4\"/>\n",
        frame.x0, frame.x0 + frame.w
    ));
    out.push_str(&text(
        frame.x0 + frame.w - 6.0,
        ty - 6.0,
        12.0,
        "end",
        &format!("threshold {} nM", trace.threshold),
    ));

    // Trajectories.
    out.push_str(&frame.polyline(trace.samples.iter().map(|s| (s.0, s.1)), TOP_COLOR, 2.0));
    out.push_str(&frame.polyline(trace.samples.iter().map(|s| (s.0, s.2)), BOTTOM_COLOR, 2.0));

    // Crossing markers.
    let crossings: Vec<(f64, &str)> = trace
        .t_top
        .map(|t| (t, TOP_COLOR))
        .into_iter()
        .chain(trace.t_bottom.map(|t| (t, BOTTOM_COLOR)))
        .collect();
    for &(t, color) in &crossings {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{ty:.2}\" r=\"5\" fill=\"{color}\" stroke=\"white\" \
             stroke-width=\"1.5\"/>\n",
            frame.px(t)
        ));
    }

    // Headline: device, challenge, response bit.
    out.push_str(&text(
        frame.x0,
        30.0,
        15.0,
        "start",
        &format!(
            "device {} · challenge {} · top rail vs bottom rail",
            trace.device_label, trace.challenge_bits
        ),
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"34\" font-size=\"24\" font-weight=\"bold\" text-anchor=\"end\" \
         fill=\"{TEXT_COLOR}\">R = {}</text>\n",
        WIDTH - MARGIN_RIGHT,
        u8::from(trace.response)
    ));

    // Legend (lower right: trajectories occupy top of the frame there).
    let lx = frame.x0 + frame.w - 220.0;
    let ly = frame.y0 + frame.h - 44.0;
    for (i, (label, color)) in [("top output Z1", TOP_COLOR), ("bottom output Z1", BOTTOM_COLOR)]
        .iter()
        .enumerate()
    {
        let y = ly + i as f64 * 18.0;
        out.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{color}\" \
             stroke-width=\"3\"/>\n",
            lx + 28.0
        ));
        out.push_str(&text(lx + 36.0, y + 4.0, 12.0, "start", label));
    }

    // Magnified inset around the decisive crossings.
    if !crossings.is_empty() {
        let t1 = crossings.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let t2 = crossings.iter().map(|c| c.0).fold(0.0_f64, f64::max);
        let pad = ((t2 - t1) * 0.6).max(0.015 * t_end);
        let inset = Frame {
            x0: MARGIN_LEFT + 18.0,
            y0: MARGIN_TOP + 14.0,
            w: 300.0,
            h: 200.0,
            tmin: (t1 - pad).max(0.0),
            tmax: (t2 + pad).min(t_end),
            cmin: trace.threshold - 14.0,
            cmax: trace.threshold + 14.0,
        };

        // Zoom window marker on the main frame.
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
             stroke=\"#555555\" stroke-dasharray=\"3,3\"/>\n",
            frame.px(inset.tmin),
            frame.py(inset.cmax),
            frame.px(inset.tmax) - frame.px(inset.tmin),
            frame.py(inset.cmin) - frame.py(inset.cmax)
        ));

        out.push_str(&format!(
            "<clipPath id=\"inset\"><rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" \
             height=\"{:.2}\"/></clipPath>\n",
            inset.x0, inset.y0, inset.w, inset.h
        ));
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"white\" \
             stroke=\"#555555\"/>\n",
            inset.x0, inset.y0, inset.w, inset.h
        ));
        out.push_str("<g clip-path=\"url(#inset)\">\n");
        let iy = inset.py(trace.threshold);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{iy:.2}\" x2=\"{:.2}\" y2=\"{iy:.2}\" stroke=\"#888888\" \
             stroke-dasharray=\"6,4\"/>\n",
            inset.x0, inset.x0 + inset.w
        ));
        out.push_str(&inset.polyline(trace.samples.iter().map(|s| (s.0, s.1)), TOP_COLOR, 2.0));
        out.push_str(&inset.polyline(trace.samples.iter().map(|s| (s.0, s.2)), BOTTOM_COLOR, 2.0));
        for &(t, color) in &crossings {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{iy:.2}\" r=\"5\" fill=\"{color}\" stroke=\"white\" \
                 stroke-width=\"1.5\"/>\n",
                inset.px(t)
            ));
        }
        out.push_str("</g>\n");
        let mut caption = String::new();
        if let Some(t) = trace.t_top {
            caption.push_str(&format!("t_top = {t:.4} s"));
        }
        if let Some(t) = trace.t_bottom {
            if !caption.is_empty() {
                caption.push_str("   ");
            }
            caption.push_str(&format!("t_bottom = {t:.4} s"));
        }
        out.push_str(&text(
            inset.x0 + 6.0,
            inset.y0 + inset.h + 16.0,
            12.0,
            "start",
            &caption,
        ));
    }

    out.push_str("</svg>\n");
    out
}

/// Renders a histogram of pairwise Hamming-distance fractions with the
/// fitted normal density overlaid (scaled to expected bin counts).
pub fn histogram_svg(
    config: &ExperimentConfig,
    fractions: &[f64],
    fit: &GaussianFit,
    title: &str,
) -> String {
    let n = fractions.len();
    let (mut lo, mut hi) = fractions
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(lo.is_finite() && hi.is_finite()) {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let bins = ((n as f64).sqrt().ceil() as usize).clamp(8, 40);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in fractions {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let peak = counts.iter().copied().max().unwrap_or(1).max(1) as f64;

    let frame = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP,
        w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        h: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
        tmin: lo,
        tmax: hi,
        cmin: 0.0,
        cmax: peak * 1.15,
    };

    let mut out = svg_open(config);
    axes(&mut out, &frame, "Hamming distance (fraction)", "pair count", 6);
    out.push_str(&text(frame.x0, 30.0, 15.0, "start", title));

    for (k, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let x = frame.px(lo + k as f64 * width);
        let x1 = frame.px(lo + (k + 1) as f64 * width);
        let y = frame.py(count as f64);
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"{BOTTOM_COLOR}\" fill-opacity=\"0.65\" stroke=\"white\" \
             stroke-width=\"0.5\"/>\n",
            x1 - x,
            frame.py(0.0) - y
        ));
    }

    if fit.std > 0.0 {
        let scale = n as f64 * width / (fit.std * (2.0 * std::f64::consts::PI).sqrt());
        let curve = (0..=240).map(|i| {
            let v = lo + (hi - lo) * i as f64 / 240.0;
            let z = (v - fit.mean) / fit.std;
            (v, (scale * (-0.5 * z * z).exp()).min(frame.cmax))
        });
        out.push_str(&frame.polyline(curve, TOP_COLOR, 2.0));
        out.push_str(&text(
            frame.x0 + frame.w - 8.0,
            frame.y0 + 18.0,
            13.0,
            "end",
            &format!("fit: mean {:.4}, std {:.4}, n = {n}", fit.mean, fit.std),
        ));
    }

    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;

    #[test]
    fn trace_svg_contains_curves_inset_and_response_label() {
        let device = molpuf::bundled::REFERENCE_8A.instance().unwrap();
        let challenge = molpuf::bundled::REFERENCE_8A.challenge();
        let mut config = ExperimentConfig::default();
        config.n_stages = 8;
        let trace =
            crate::experiments::run_trace(&config, &device, "ref8a", &challenge).unwrap();
        let svg = trace_svg(&config, &trace);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("R = "), "response label present");
        assert!(svg.contains("clipPath id=\"inset\""), "inset present");
        assert!(svg.matches("<polyline").count() >= 4, "main + inset curves");
        assert!(svg.contains(&format!("config_hash={}", config.hash())));
    }

    #[test]
    fn histogram_svg_draws_bars_and_overlay() {
        let mut config = ExperimentConfig::default();
        config.mode = Mode::DelayModel;
        config.devices = 12;
        config.challenges = 32;
        config.n_stages = 8;
        let u = crate::experiments::run_uniqueness(&config).unwrap();
        let svg = histogram_svg(&config, &u.pair_fractions, &u.inter_fit, "pairwise distances");
        assert!(svg.contains("<rect"), "bars present");
        assert!(svg.contains("fit: mean"), "overlay caption present");
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
