use std::process::ExitCode;

fn init_logging() {
    let level = match std::env::var("BEC_LOG").as_deref() {
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        _ => log::LevelFilter::Off,
    };
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).init();
}

fn main() -> ExitCode {
    init_logging();
    match bec::run(std::env::args_os()) {
        Ok(out) => {
            print!("{}", out.render());
            if let Some(e) = out.report.get("error") {
                eprintln!("bec: {e}");
            }
            ExitCode::from(out.exit as u8)
        }
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
