use std::net::SocketAddr;
use std::process::ExitCode;

use hhseg_service::{router, AppState, Settings};

#[tokio::main]
async fn main() -> ExitCode {
    let settings = match Settings::from_env() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("hhseg-serve: {e}");
            return ExitCode::from(2);
        }
    };
    let addr = SocketAddr::from(([0, 0, 0, 0], settings.port));
    let state = match AppState::new(settings) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("hhseg-serve: cannot open session store: {e}");
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("hhseg-serve: cannot bind {addr}: {e}");
            return ExitCode::from(2);
        }
    };
    eprintln!("hhseg-serve: listening on {addr} ({} stored session(s))", state.store.len());
    if let Err(e) = axum::serve(listener, router(state)).await {
        eprintln!("hhseg-serve: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
