use std::io::Read;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use xray_smt::{run_script, Options, Strategy};

fn main() -> ExitCode {
    let mut options = Options::default();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--strategy" => {
                let Some(name) = args.next() else {
                    eprintln!("--strategy requires a value");
                    return ExitCode::from(2);
                };
                let Some(strategy) = Strategy::parse(&name) else {
                    eprintln!("unknown strategy {name:?} (default | reverse | faulty)");
                    return ExitCode::from(2);
                };
                options.strategy = strategy;
            }
            "--timeout-ms" => {
                let parsed = args.next().and_then(|v| v.parse::<u64>().ok());
                let Some(ms) = parsed else {
                    eprintln!("--timeout-ms requires an integer value");
                    return ExitCode::from(2);
                };
                options.deadline = Some(Instant::now() + Duration::from_millis(ms));
            }
            other => {
                eprintln!("unknown argument {other:?}");
                return ExitCode::from(2);
            }
        }
    }

    let mut input = String::new();
    if let Err(err) = std::io::stdin().read_to_string(&mut input) {
        eprintln!("failed to read stdin: {err}");
        return ExitCode::from(2);
    }

    match run_script(&input, options) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            println!("(error \"{err}\")");
            ExitCode::FAILURE
        }
    }
}
