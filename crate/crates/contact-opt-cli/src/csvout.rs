//! Trajectory CSV output: time column, chart columns in chart order, then
//! diagnostic columns. 17 significant digits, `.` decimal separator, `\n`
//! line endings — byte-identical across runs with the same seed.

use contact_opt::integrate::Trajectory;

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push('t');
    for name in &traj.chart {
        out.push(',');
        out.push_str(name);
    }
    for (name, _) in &traj.diagnostics {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, t) in traj.times.iter().enumerate() {
        push_value(&mut out, *t);
        for v in &traj.samples[i] {
            out.push(',');
            push_value(&mut out, *v);
        }
        for (_, col) in &traj.diagnostics {
            out.push(',');
            push_value(&mut out, col[i]);
        }
        out.push('\n');
    }
    out
}

fn push_value(out: &mut String, v: f64) {
    use std::fmt::Write;
    write!(out, "{v:.16e}").expect("string write");
}

pub fn write_trajectory(path: &std::path::Path, traj: &Trajectory) -> std::io::Result<()> {
    std::fs::write(path, trajectory_csv(traj))
}
