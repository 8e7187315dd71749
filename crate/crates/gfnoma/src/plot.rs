//! Plot script generation.
//!
//! Results ship as CSV; rendering happens wherever a plotting stack is
//! installed. The emitted script is self-contained: it hard-codes its
//! CSV path, skips the comment header, draws one log-scale error-rate
//! series per (detector, active user count) with interval whiskers, and
//! writes a PNG beside itself. An empty CSV yields an empty axes, not a
//! crash.

use std::io::Write;
use std::path::Path;

/// Writes a Python script that renders `csv_path` to
/// `<script stem>.png`. The caller picks both locations.
pub fn emit_plot_script(csv_path: &Path, script_path: &Path) -> std::io::Result<()> {
    let csv_literal = csv_path.display().to_string().replace('\\', "\\\\").replace('"', "\\\"");
    let png_name = script_path
        .with_extension("png")
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "curves.png".to_string());
    let script = format!(
        r##"#!/usr/bin/env python3
"""Renders error-rate curves from a sweep CSV (generated file)."""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV_PATH = "{csv_literal}"
OUT_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "{png_name}")

series = {{}}
with open(CSV_PATH, newline="") as fh:
    rows = [r for r in fh if not r.startswith("#")]
for row in csv.DictReader(rows):
    key = (row["detector"], int(row["active_users"]))
    series.setdefault(key, []).append(
        (
            float(row["ebn0_db"]),
            float(row["bler"]),
            float(row["ci_low"]),
            float(row["ci_high"]),
        )
    )

fig, ax = plt.subplots(figsize=(6.4, 4.8))
for (detector, users), pts in sorted(series.items()):
    pts.sort()
    x = [p[0] for p in pts]
    y = [p[1] for p in pts]
    lo = [max(p[1] - p[2], 0.0) for p in pts]
    hi = [max(p[3] - p[1], 0.0) for p in pts]
    ax.errorbar(x, y, yerr=[lo, hi], marker="o", capsize=3,
                label=f"{{detector.upper()}}, {{users}} active")
ax.set_xlabel("Eb/N0 [dB]")
ax.set_ylabel("Block error rate")
ax.set_yscale("log")
ax.grid(True, which="both", alpha=0.3)
if series:
    ax.legend()
fig.tight_layout()
fig.savefig(OUT_PATH, dpi=150)
print(f"wrote {{OUT_PATH}}")
sys.exit(0)
"##
    );
    let mut file = std::fs::File::create(script_path)?;
    file.write_all(script.as_bytes())?;
    Ok(())
}
