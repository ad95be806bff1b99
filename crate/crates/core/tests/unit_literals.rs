//! Conversion factors live in one place; other modules call the helpers.

use std::fs;
use std::path::Path;

const FACTORS: [&str; 5] = ["1609.344", "0.44704", "3600", "2.23694", "0.000621371"];

fn rust_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            rust_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "rs") {
            out.push(path);
        }
    }
}

#[test]
fn conversion_factors_only_in_units_module() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    rust_files(&src, &mut files);
    assert!(files.len() > 5);
    let mut offenders = Vec::new();
    for path in files.iter().filter(|p| !p.ends_with("units.rs")) {
        let text = fs::read_to_string(path).unwrap();
        // Test modules may spell out expected values.
        let code = text.split("#[cfg(test)]").next().unwrap();
        for (i, line) in code.lines().enumerate() {
            if let Some(f) = FACTORS.iter().find(|f| line.contains(*f)) {
                offenders.push(format!("{}:{}: {f}", path.display(), i + 1));
            }
        }
    }
    assert!(offenders.is_empty(), "{offenders:#?}");
}
