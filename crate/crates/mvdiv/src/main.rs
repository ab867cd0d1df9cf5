use clap::Parser;

fn main() {
    // Clap's own exit code for usage errors is 2, which this tool reserves
    // for solver failures; remap argument problems to the config exit code.
    let cli = match mvdiv::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { mvdiv::cli::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(mvdiv::cli::run(cli));
}
