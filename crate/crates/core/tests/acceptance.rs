use std::process::ExitCode;

use pencil_lab::acceptance;
use pencil_lab::problem::SweepOptions;

fn main() -> ExitCode {
    let mut failed = 0;
    for id in 1..=10 {
        let outcome = acceptance::run_criterion(id, SweepOptions::default()).expect("criterion ids 1..=10");
        println!("{outcome}");
        if !outcome.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
