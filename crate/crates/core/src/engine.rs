//! One-shot subprocess engines.
//!
//! External detectors, embedders, recognisers and restorers are all driven
//! the same way: spawn the command, stream a payload to its stdin, collect
//! stdout, and require exit status 0.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("engine unavailable: {0}")]
    Unavailable(String),
    #[error("engine protocol violation: {0}")]
    ProtocolViolation(String),
}

/// Program plus arguments, e.g. `["python3", "vad.py", "--threshold", "0.5"]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

impl EngineCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { program: program.into(), args: args.into_iter().map(Into::into).collect() }
    }

    /// Convenience for `sh -c <script>`.
    pub fn shell(script: impl Into<String>) -> Self {
        Self::new("sh", ["-c".to_string(), script.into()])
    }

    /// Runs the command once with `input` on stdin and returns stdout.
    pub fn run(&self, input: &[u8]) -> Result<Vec<u8>, EngineError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EngineError::Unavailable(format!("{}: {e}", self.program)))?;

        let mut stdin = child.stdin.take().expect("stdin piped");
        let payload = input.to_vec();
        // Write from a separate thread so a chatty engine cannot deadlock us
        // on a full stdout pipe. Engines that ignore stdin close it early,
        // which shows up here as a broken pipe and is not an error.
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });

        let mut stdout = Vec::new();
        child
            .stdout
            .take()
            .expect("stdout piped")
            .read_to_end(&mut stdout)
            .map_err(|e| EngineError::Unavailable(format!("reading engine output: {e}")))?;
        let mut stderr = String::new();
        if let Some(mut err) = child.stderr.take() {
            let _ = err.read_to_string(&mut stderr);
        }
        let status = child
            .wait()
            .map_err(|e| EngineError::Unavailable(format!("waiting for engine: {e}")))?;
        let _ = writer.join();

        if !status.success() {
            let tail: String = stderr.lines().last().unwrap_or("").chars().take(200).collect();
            return Err(EngineError::Unavailable(format!("{} exited with {status}: {tail}", self.program)));
        }
        Ok(stdout)
    }

    /// Like [`run`](Self::run) but decodes stdout as UTF-8.
    pub fn run_text(&self, input: &[u8]) -> Result<String, EngineError> {
        String::from_utf8(self.run(input)?)
            .map_err(|_| EngineError::ProtocolViolation("engine output is not UTF-8".into()))
    }
}
