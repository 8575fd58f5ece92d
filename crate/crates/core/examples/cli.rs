//! Drive the command-line harness in-process: simulate a panel, estimate
//! on it and run a small Monte Carlo.
//!
//! cargo run --release --example cli

use panel_ife::harness::cli::main_with_args;

fn main() {
    let out = std::env::temp_dir().join("panel-ife-cli-example");
    let out = out.to_str().expect("utf-8 temp dir");
    let data = format!("{out}/panel.csv");
    let runs: [&[&str]; 3] = [
        &["panel-ife", "simulate", "--n", "100", "--t", "30", "--seed", "4", "--out", out],
        &["panel-ife", "estimate", "--data", &data, "--bootstrap", "199", "--level", "0.9", "--level", "0.95", "--out", out],
        &["panel-ife", "montecarlo", "--replications", "20", "--size", "50x20", "--seed", "4", "--out", out],
    ];
    for args in runs {
        let code = main_with_args(args.iter().copied());
        if code != 0 {
            std::process::exit(code);
        }
    }
}
