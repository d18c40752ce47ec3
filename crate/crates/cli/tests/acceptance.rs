//! One line per acceptance criterion; exits nonzero if any fails.

use std::io::Write;

use qkd_sim::acceptance::CRITERIA;

fn main() {
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for c in &CRITERIA {
        let started = std::time::Instant::now();
        let v = (c.check)();
        failed += usize::from(!v.pass);
        writeln!(out, "{} [{:.1}s]", v.line(c), started.elapsed().as_secs_f64()).unwrap();
        out.flush().unwrap();
    }
    writeln!(
        out,
        "acceptance: {} of {} criteria pass",
        CRITERIA.len() - failed,
        CRITERIA.len()
    )
    .unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
