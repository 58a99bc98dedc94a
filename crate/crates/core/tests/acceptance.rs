//! One line per acceptance criterion; exits nonzero if any fails.

use gabor_fio::acceptance::{run, Outcome};

fn main() {
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = (1..=9).map(|id| s.spawn(move || run(id))).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {} failed", outcomes.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
