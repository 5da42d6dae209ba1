use clap::Parser;
use synergrasp_cli::{run, Cli, ErrorReport};

fn main() {
    let cli = Cli::parse();
    let command = cli.command.name();
    let stdout = std::io::stdout();
    if let Err(e) = run(cli, &mut stdout.lock()) {
        let report = ErrorReport {
            command,
            kind: e.kind(),
            message: e.to_string(),
        };
        eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
        std::process::exit(1);
    }
}
