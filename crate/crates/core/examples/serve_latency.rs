// Serving predictions over line-delimited JSON and measuring latency.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use bidscape::admnet::{init_params, NetConfig};
use bidscape::cli::serve::{bench, start_server, LatencyReport, Prediction};
use bidscape::synthgen::{build_world, SynthConfig};

pub fn run_example() -> anyhow::Result<()> {
    let world = build_world(&SynthConfig::default())?;
    let data = world.to_dataset(&world.sample_auctions(1_000, 1), None)?;
    let model = Arc::new(init_params(data.schema.clone(), data.grid, NetConfig::default(), 1)?);

    let server = start_server(Arc::clone(&model), "127.0.0.1:0")?;
    let stream = TcpStream::connect(server.local_addr())?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut line = String::new();

    writeln!(writer, r#"{{"features":{{"context":"c1","noise_cat_0":"v7"}}}}"#)?;
    reader.read_line(&mut line)?;
    let p: Prediction = serde_json::from_str(&line)?;
    println!("argmax price {:.2}, mass {:.6}", p.argmax_price, p.probs.iter().sum::<f64>());

    line.clear();
    writeln!(writer, "not json")?;
    reader.read_line(&mut line)?;
    println!("malformed request -> {}", line.trim());

    line.clear();
    writeln!(writer, r#"{{"op":"stats"}}"#)?;
    reader.read_line(&mut line)?;
    let stats: LatencyReport = serde_json::from_str(&line)?;
    println!("server stats: {stats:?}");
    server.shutdown();

    let report = bench(model, 500, 2, 7)?;
    println!("in-process p99 {:.3} ms, loopback p99 {:.3} ms", report.in_process.p99_ms, report.loopback.p99_ms);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
