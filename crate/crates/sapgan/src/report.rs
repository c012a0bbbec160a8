//! Plain-text rendering of a Turing-test report.

use std::fmt::Write;

use sapgan_core::survey::{Category, Source, TuringReport, Unit};

fn unit_name(u: Unit) -> &'static str {
    match u {
        Unit::Participant => "participants",
        Unit::Painting => "paintings",
    }
}

pub fn render_text(r: &TuringReport) -> String {
    let mut s = String::new();
    let unit = unit_name(r.unit);
    let _ = writeln!(s, "Visual Turing Test: {} responses, statistics across {unit}", r.responses);
    let _ = writeln!(s);
    let _ = writeln!(s, "Frequency mistaken for human art");
    let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>6}", "source", "mean", "stddev", "n");
    for f in &r.frequency {
        let flag = if f.summary.stddev_undefined { " (stddev undefined)" } else { "" };
        let _ =
            writeln!(s, "{:<10} {:>8.3} {:>8.3} {:>6}{flag}", f.source, f.summary.mean, f.summary.stddev, f.summary.n);
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Mean point distance from human paintings (1-4 scale)");
    let _ = write!(s, "{:<10}", "source");
    for c in Category::ALL {
        let _ = write!(s, " {:>12}", c.as_str());
    }
    let _ = writeln!(s);
    for src in [Source::Baseline, Source::Sapgan] {
        let _ = write!(s, "{:<10}", src.as_str());
        for &c in Category::ALL {
            match r.point_distance.iter().find(|d| d.source == src && d.category == c) {
                Some(d) => {
                    let _ = write!(s, " {:>12.3}", d.distance);
                }
                None => {
                    let _ = write!(s, " {:>12}", "-");
                }
            }
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Participant accuracy: mean {:.3} over {} participants",
        r.scores.mean,
        r.scores.participants.len()
    );
    for lang in sapgan_core::survey::NativeLang::ALL {
        if let Some(m) = r.scores.mean_for(*lang) {
            let n = r.scores.accuracies(Some(*lang)).len();
            let _ = writeln!(s, "  {lang:<6} {m:.3} (n = {n})");
        }
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "Two-tailed Student t-tests");
    for c in &r.comparisons {
        match (&c.test, &c.skipped) {
            (Some(t), _) => {
                let mark = if t.p < 0.05 { " *" } else { "" };
                let _ = writeln!(s, "  {:<42} t = {:>8.4}  df = {:>4}  p = {:.4}{mark}", c.label, t.t, t.df, t.p);
            }
            (None, reason) => {
                let _ = writeln!(s, "  {:<42} skipped: {}", c.label, reason.as_deref().unwrap_or("no data"));
            }
        }
    }
    s
}
