use clap::Parser;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = gslang_cli::Cli::parse();
    gslang_cli::init_threads()?;
    gslang_cli::run(cli)
}
