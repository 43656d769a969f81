//! Times full poll-correlate-ingest-frame cycles for a pod of a given size.
//!
//! `cargo run --release --example pipeline_bench -- [points] [nodes] [cycles]`

use podwatch::pipeline::{run_bench, StageTimings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let points = args.next().transpose()?.unwrap_or(5325);
    let nodes = args.next().transpose()?.unwrap_or(900);
    let cycles = args.next().transpose()?.unwrap_or(3) as u64;

    println!("{}", StageTimings::TSV_HEADER);
    let outputs = run_bench(points, nodes, cycles)?;
    for (i, o) in outputs.iter().enumerate() {
        println!(
            "{}",
            o.timings.tsv_row(i as u64 + 1, o.frame_id, o.timestamp)
        );
    }
    let worst = outputs
        .iter()
        .map(|o| o.timings.total().as_secs_f64())
        .fold(0.0, f64::max);
    eprintln!("{points} points, {nodes} nodes: slowest cycle {worst:.3}s");
    Ok(())
}
