//! Whitespace normalization applied to reference prompt texts.

/// Strips trailing whitespace and rescales indentation inside each fence
/// so that the smallest indent is two spaces.
pub fn normalize(text: &str) -> String {
    fn flush(block: &mut Vec<String>, out: &mut Vec<String>) {
        let indent = |l: &str| l.len() - l.trim_start_matches(' ').len();
        let min = block.iter().map(|l| indent(l)).filter(|&i| i > 0).min().unwrap_or(2);
        out.extend(block.drain(..).map(|l| {
            let i = indent(&l);
            format!("{}{}", " ".repeat(i * 2 / min), &l[i..])
        }));
    }
    let mut out = Vec::new();
    let mut block = Vec::new();
    let mut inside = false;
    for line in text.split('\n') {
        let line = line.trim_end().to_string();
        if line.starts_with("```") {
            if inside {
                flush(&mut block, &mut out);
            }
            inside = !inside;
            out.push(line);
        } else if inside {
            block.push(line);
        } else {
            out.push(line);
        }
    }
    out.join("\n")
}
