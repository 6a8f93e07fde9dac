//! Command line front end: analyze, render, selftest.

mod cli;
mod config;
mod pipeline;
mod report;
mod svg;

use clap::Parser;
use morsescope::selftest;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    match cli::Cli::parse().command {
        cli::Command::Analyze(args) => cmd_analyze(args),
        cli::Command::Render(args) => cmd_render(args),
        cli::Command::Selftest(args) => cmd_selftest(args),
    }
}

fn cmd_analyze(args: cli::AnalyzeArgs) -> i32 {
    let resolved = match config::resolve(&args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if resolved.workers > 0 {
        // A pool may already exist in-process; the analysis is
        // deterministic for any worker count, so a stale size is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(resolved.workers)
            .build_global();
    }
    match pipeline::analyze(&resolved) {
        Ok(outcome) => {
            let r = &outcome.report;
            println!(
                "cells: {} ({} failed, {} exiting)",
                r.cells.total, r.cells.failed, r.cells.exiting
            );
            println!(
                "morse sets: {} (largest {}, {} singleton)",
                r.census.n_sets, r.census.largest, r.census.n_singleton
            );
            if let Some(vr) = &r.verification {
                let verdict = if vr.certified { "certified" } else { "rejected" };
                println!("verification [{}]: {verdict}", vr.mode);
                for reason in &vr.reasons {
                    println!("  - {reason}");
                }
            }
            if let Some(entries) = &r.conley {
                for entry in entries {
                    match (&entry.betti, &entry.error) {
                        (Some(betti), _) => println!("conley index of set {}: betti {betti:?}", entry.set),
                        (None, Some(err)) => println!("conley index of set {}: {err}", entry.set),
                        (None, None) => {}
                    }
                }
            }
            println!("report: {}", resolved.report_path.display());
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_render(args: cli::RenderArgs) -> i32 {
    let out = args
        .out
        .unwrap_or_else(|| args.report.with_file_name("morse.svg"));
    match pipeline::render_from_report(&args.report) {
        Ok(svg) => match std::fs::write(&out, svg) {
            Ok(()) => {
                println!("wrote {}", out.display());
                0
            }
            Err(e) => {
                eprintln!("error: {}: {e}", out.display());
                1
            }
        },
        Err(e) => {
            eprintln!("render error: {e}");
            2
        }
    }
}

fn cmd_selftest(args: cli::SelftestArgs) -> i32 {
    let outcomes = if args.tamper {
        selftest::run_tampered()
    } else {
        selftest::run_all()
    };
    let mut failed = 0;
    for o in &outcomes {
        let mark = if o.passed { "ok  " } else { "FAIL" };
        println!("{mark} {} ({})", o.name, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} fixture(s) failed");
        1
    } else {
        0
    }
}
