//! Line-delimited JSON request loop over standard streams.
//!
//! Requests are answered in order, one response line each. A bad request
//! yields an error object and the loop continues. SIGINT or SIGTERM stops
//! reading, answers the lines already received and exits cleanly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use anyhow::{Context, Result};
use extgate_core::{decide, Extractor};
use extgate_tabular::GateModel;
use serde::Deserialize;
use serde_json::{json, Map, Value};

#[derive(Deserialize)]
struct Request {
    #[serde(default)]
    id: Option<String>,
    question: String,
    #[serde(default)]
    contexts: Vec<String>,
    #[serde(default)]
    overrides: Option<BTreeMap<String, f64>>,
}

fn respond(ex: &Extractor, gate: &GateModel, threshold: f64, line_no: usize, line: &str) -> Value {
    let answer = || -> std::result::Result<Value, String> {
        let req: Request = serde_json::from_str(line).map_err(|e| format!("malformed request: {e}"))?;
        let id = req.id.clone().unwrap_or_default();
        let fv = ex
            .extract_question(&id, &req.question, &req.contexts, req.overrides.as_ref())
            .map_err(|e| e.to_string())?;
        let d = decide(gate, &fv, threshold).map_err(|e| e.to_string())?;
        let mut groups: Map<String, Value> = Map::new();
        for (def, v) in fv.schema.iter().zip(&fv.values) {
            let entry = groups
                .entry(def.group.as_str())
                .or_insert_with(|| Value::Object(Map::new()));
            entry
                .as_object_mut()
                .expect("group entries are objects")
                .insert(def.name.clone(), json!(v));
        }
        let mut out = json!({ "line": line_no });
        if let Some(id) = req.id {
            out["id"] = json!(id);
        }
        out["retrieve"] = json!(d.retrieve);
        out["score"] = json!(d.score);
        out["features"] = Value::Object(groups);
        Ok(out)
    };
    answer().unwrap_or_else(|e| json!({ "line": line_no, "error": e }))
}

pub fn run(ex: &Extractor, gate: &GateModel, threshold: f64) -> Result<()> {
    let stop = Arc::new(AtomicBool::new(false));
    for sig in [signal_hook::consts::SIGINT, signal_hook::consts::SIGTERM] {
        signal_hook::flag::register(sig, Arc::clone(&stop)).context("installing signal handler")?;
    }
    let (tx, rx) = mpsc::channel::<std::io::Result<String>>();
    std::thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });

    let stdout = std::io::stdout();
    let mut line_no = 0;
    let mut handle = |line: std::io::Result<String>| -> Result<()> {
        line_no += 1;
        let response = match line {
            Ok(l) if l.trim().is_empty() => return Ok(()),
            Ok(l) => respond(ex, gate, threshold, line_no, &l),
            Err(e) => json!({ "line": line_no, "error": format!("unreadable line: {e}") }),
        };
        let mut out = stdout.lock();
        writeln!(out, "{response}")?;
        out.flush()?;
        Ok(())
    };
    loop {
        if stop.load(Ordering::SeqCst) {
            while let Ok(line) = rx.try_recv() {
                handle(line)?;
            }
            return Ok(());
        }
        match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(line) => handle(line)?,
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => return Ok(()),
        }
    }
}
