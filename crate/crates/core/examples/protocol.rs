//! Run one evaluation protocol and print its table.
//!
//! cargo run --release -p tidyup-core --example protocol -- toys 7 '{"runs": 2}'

use tidyup_core::run_protocol;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "toys".to_string());
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let config = args.next().map(|s| serde_json::from_str(&s)).transpose()?;
    let report = run_protocol(&name, config.as_ref(), seed)?;
    print!("{}", report.to_table());
    Ok(())
}
