//! Serves a fixture tool server over stdio or HTTP.

use std::io::{self, BufRead, Write};

use peil_core::protocol::FixtureToolServer;

pub fn serve_stdio(server: &FixtureToolServer) -> io::Result<()> {
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(out, "{}", server.handle_line(&line))?;
        out.flush()?;
    }
    Ok(())
}

/// Prints `listening on http://<addr>` to stderr once bound, then serves
/// until the process is killed.
pub fn serve_http(server: &FixtureToolServer, addr: &str) -> io::Result<()> {
    let http = tiny_http::Server::http(addr).map_err(io::Error::other)?;
    let bound = http
        .server_addr()
        .to_ip()
        .map(|a| a.to_string())
        .unwrap_or_else(|| addr.to_string());
    eprintln!("listening on http://{bound}");
    for mut request in http.incoming_requests() {
        let mut body = Vec::new();
        if let Err(e) = request.as_reader().read_to_end(&mut body) {
            eprintln!("dropped request: {e}");
            continue;
        }
        let path = request.url().split('?').next().unwrap_or("").to_string();
        let (status, reply) = server.handle_http(&path, &body);
        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
        let response = tiny_http::Response::from_data(reply)
            .with_status_code(status)
            .with_header(header);
        if let Err(e) = request.respond(response) {
            eprintln!("failed to answer: {e}");
        }
    }
    Ok(())
}
