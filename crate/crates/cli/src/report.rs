//! Grouped bar charts from macro CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use patexpand_core::eval::MACRO_HEADER;

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub provider: String,
    pub field: String,
    pub value: f64,
}

/// Reads `provider,field,…,macro_f1,…` rows.
pub fn parse_macro_csv(text: &str) -> Result<Vec<Bar>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MACRO_HEADER) {
        return Err(format!("expected header `{MACRO_HEADER}`"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cols = split_csv(line);
            if cols.len() != 7 {
                return Err(format!("line {}: expected 7 columns", i + 2));
            }
            let value = cols[5]
                .parse::<f64>()
                .map_err(|_| format!("line {}: bad macro_f1 `{}`", i + 2, cols[5]))?;
            Ok(Bar {
                provider: cols[0].clone(),
                field: cols[1].clone(),
                value,
            })
        })
        .collect()
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

/// One group per field, one bar per provider, values on a 0 to 1 axis.
pub fn render_svg(bars: &[Bar], title: &str) -> String {
    let mut fields: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut providers: Vec<&str> = Vec::new();
    for bar in bars {
        fields.entry(&bar.field).or_default().insert(&bar.provider, bar.value);
        if !providers.contains(&bar.provider.as_str()) {
            providers.push(&bar.provider);
        }
    }

    let (bar_w, gap, left, top, plot_h) = (24.0, 24.0, 50.0, 40.0, 200.0);
    let group_w = bar_w * providers.len().max(1) as f64 + gap;
    let width = left + group_w * fields.len().max(1) as f64 + 160.0;
    let height = top + plot_h + 60.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            svg,
            "<line x1=\"{left}\" x2=\"{}\" y1=\"{y}\" y2=\"{y}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.2}</text>",
            width - 160.0,
            left - 6.0,
            y + 4.0
        );
    }
    for (g, (field, values)) in fields.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        for (p, provider) in providers.iter().enumerate() {
            let Some(&v) = values.get(provider) else { continue };
            let h = plot_h * v.clamp(0.0, 1.0);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{bar_w}" height="{h}" fill="{}"><title>{} {}: {v:.4}</title></rect>"#,
                x0 + p as f64 * bar_w,
                top + plot_h - h,
                PALETTE[p % PALETTE.len()],
                escape(provider),
                escape(field)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + (group_w - gap) / 2.0,
            top + plot_h + 16.0,
            escape(field)
        );
    }
    for (p, provider) in providers.iter().enumerate() {
        let y = top + 14.0 * p as f64;
        let x = width - 150.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            PALETTE[p % PALETTE.len()],
            x + 14.0,
            y + 9.0,
            escape(provider)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
