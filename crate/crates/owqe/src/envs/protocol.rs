//! Line-delimited JSON protocol for out-of-process environments.
//!
//! The server (the process hosting the simulator) writes one handshake line
//! holding its [`EnvSpec`], then answers commands one line at a time:
//!
//! ```text
//! -> {"observation_dim":3,"action_dim":1,"action_bounds":[2.0],"episode_length":200,"dt":0.05}
//! <- {"cmd":"reset"}
//! -> {"obs":[-1.0,0.0,0.0],"reward":0.0,"terminal":false,"timeout":false}
//! <- {"cmd":"step","action":[1.5]}
//! -> {"obs":[...],"reward":-9.8,"terminal":false,"timeout":false}
//! ```
//!
//! Replies have one uniform shape; a reset reply carries reward 0 and
//! cleared flags. [`serve_env`] exposes any [`Environment`] over a byte
//! stream, and [`ExternalEnv`] is the matching client, itself an
//! [`Environment`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command as ProcessCommand, Stdio};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{EnvSpec, Environment, Step};

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum Command {
    Reset,
    Step { action: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
struct Reply {
    obs: Vec<f64>,
    reward: f64,
    terminal: bool,
    timeout: bool,
}

/// Serves `env` over the given byte streams until the client disconnects.
pub fn serve_env<R: BufRead, W: Write>(
    env: &mut dyn Environment,
    reader: R,
    mut writer: W,
) -> Result<()> {
    let send = |reply: &Reply, w: &mut W| -> Result<()> {
        serde_json::to_writer(&mut *w, reply)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    };
    serde_json::to_writer(&mut writer, env.spec())?;
    writer.write_all(b"\n")?;
    writer.flush()?;

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str(&line)? {
            Command::Reset => Reply {
                obs: env.reset()?,
                reward: 0.0,
                terminal: false,
                timeout: false,
            },
            Command::Step { action } => {
                let step = env.step(&action)?;
                Reply {
                    obs: step.obs,
                    reward: step.reward,
                    terminal: step.terminal,
                    timeout: step.timeout,
                }
            }
        };
        send(&reply, &mut writer)?;
    }
    Ok(())
}

/// Client side of the protocol; drives a remote simulator as a local
/// [`Environment`].
pub struct ExternalEnv {
    spec: EnvSpec,
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl ExternalEnv {
    /// Spawns `command` (split on whitespace) and speaks the protocol over
    /// its standard streams. The child is killed when this value drops.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::config("empty external environment command"))?;
        let mut child = ProcessCommand::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::env(format!("failed to spawn '{command}': {e}")))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::env("child stdout unavailable"))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| Error::env("child stdin unavailable"))?;
        let mut env = ExternalEnv::from_io(BufReader::new(stdout), stdin)?;
        env.child = Some(child);
        Ok(env)
    }

    /// Wraps preexisting byte streams (e.g. a socket pair), reading the
    /// handshake line immediately.
    pub fn from_io<R, W>(reader: R, writer: W) -> Result<Self>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        let mut reader = Box::new(reader);
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::env("external environment closed before handshake"));
        }
        let spec: EnvSpec = serde_json::from_str(&line)?;
        spec.validate()?;
        Ok(ExternalEnv {
            spec,
            reader,
            writer: Box::new(writer),
            child: None,
        })
    }

    fn round_trip(&mut self, cmd: &Command) -> Result<Reply> {
        serde_json::to_writer(&mut self.writer, cmd)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::env("external environment closed mid-episode"));
        }
        Ok(serde_json::from_str(&line)?)
    }
}

impl Environment for ExternalEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        Ok(self.round_trip(&Command::Reset)?.obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        let reply = self.round_trip(&Command::Step {
            action: action.to_vec(),
        })?;
        Ok(Step {
            obs: reply.obs,
            reward: reply.reward,
            terminal: reply.terminal,
            timeout: reply.timeout,
        })
    }
}

impl Drop for ExternalEnv {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
