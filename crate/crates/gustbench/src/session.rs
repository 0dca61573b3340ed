//! One environment per connection, driven line by line.

use std::io::{self, BufRead, Write};

use gustbench_core::config::{ConfigError, ScenarioConfig};
use gustbench_core::control::ControllerKind;
use gustbench_core::env::{Action, Env, EnvError, ACT_DIM, OBS_DIM};

use crate::protocol::{parse_request, ErrorCode, Request, Response, PROTOCOL_VERSION};

/// What a session uses when a client resets without configuring first.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionDefaults {
    /// Built-in scenario name or path to a scenario file.
    pub scenario: String,
    /// `None` takes the scenario's own controller.
    pub controller: Option<ControllerKind>,
}

impl Default for SessionDefaults {
    fn default() -> Self {
        Self {
            scenario: "training".to_string(),
            controller: None,
        }
    }
}

/// Reply to one request, and whether the session ends after it.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub response: Response,
    pub close: bool,
}

impl From<Response> for Reply {
    fn from(response: Response) -> Self {
        Reply {
            response,
            close: false,
        }
    }
}

#[derive(Debug)]
pub struct Session {
    id: u64,
    defaults: SessionDefaults,
    env: Option<Env>,
    scenario: Option<String>,
    base_seed: u64,
    resets: u64,
    steps: u64,
}

impl Session {
    pub fn new(id: u64, defaults: SessionDefaults) -> Self {
        Self {
            id,
            defaults,
            env: None,
            scenario: None,
            base_seed: 0,
            resets: 0,
            steps: 0,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn scenario(&self) -> Option<&str> {
        self.scenario.as_deref()
    }

    /// Steps taken over the session's lifetime.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        match parse_request(line) {
            Ok(req) => self.handle(req),
            Err(resp) => resp.into(),
        }
    }

    pub fn handle(&mut self, req: Request) -> Reply {
        match req {
            Request::Hello { version } => match version {
                Some(v) if v != PROTOCOL_VERSION => Response::error(
                    ErrorCode::UnsupportedVersion,
                    format!("server speaks version {PROTOCOL_VERSION}, client asked for {v}"),
                ),
                _ => Response::Hello {
                    version: PROTOCOL_VERSION,
                    obs_dim: OBS_DIM,
                    act_dim: ACT_DIM,
                },
            }
            .into(),
            Request::Configure {
                scenario,
                controller,
                seed,
            } => self.configure(&scenario, controller, seed.unwrap_or(0)).into(),
            Request::Reset { seed } => self.reset(seed).into(),
            Request::Step { action } => self.step(&action).into(),
            Request::Close => Reply {
                response: Response::Closed { closed: true },
                close: true,
            },
        }
    }

    fn configure(&mut self, scenario: &str, controller: Option<ControllerKind>, seed: u64) -> Response {
        let cfg = match ScenarioConfig::resolve(scenario) {
            Ok(c) => c,
            Err(e @ ConfigError::UnknownScenario(_)) => {
                return Response::error(ErrorCode::UnknownScenario, e.to_string())
            }
            Err(e) => return Response::error(ErrorCode::InvalidConfig, e.to_string()),
        };
        let kind = controller.unwrap_or(cfg.controller);
        let n_gates = cfg.gate_count();
        let name = cfg.name.clone();
        match Env::new(cfg, kind) {
            Ok(env) => {
                self.env = Some(env);
                self.scenario = Some(name.clone());
                self.base_seed = seed;
                self.resets = 0;
                Response::Configured {
                    scenario: name,
                    controller: kind,
                    n_gates,
                    seed,
                }
            }
            Err(e) => Response::error(ErrorCode::InvalidConfig, e.to_string()),
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Response {
        if self.env.is_none() {
            let d = self.defaults.clone();
            let r = self.configure(&d.scenario, d.controller, 0);
            if r.error_code().is_some() {
                return r;
            }
        }
        let env = self.env.as_mut().expect("configured above");
        let seed = seed.unwrap_or_else(|| self.base_seed.wrapping_add(self.resets));
        self.resets += 1;
        match env.reset(seed) {
            Ok(obs) => Response::Reset {
                obs: obs.0.to_vec(),
                seed,
            },
            Err(e) => Response::error(ErrorCode::InvalidConfig, e.to_string()),
        }
    }

    fn step(&mut self, action: &[f64]) -> Response {
        let Some(env) = self.env.as_mut() else {
            return Response::error(ErrorCode::NotReset, "step before reset");
        };
        let action: [f64; ACT_DIM] = match action.try_into() {
            Ok(a) => a,
            Err(_) => {
                return Response::error(
                    ErrorCode::BadAction,
                    format!("action needs {ACT_DIM} components, got {}", action.len()),
                )
            }
        };
        match env.step(&Action(action)) {
            Ok(r) => {
                self.steps += 1;
                Response::Step {
                    obs: r.observation.0.to_vec(),
                    reward: r.reward,
                    done: r.done,
                    info: r.info,
                }
            }
            Err(EnvError::StepBeforeReset) => Response::error(ErrorCode::NotReset, "step before reset"),
            Err(EnvError::EpisodeFinished) => {
                Response::error(ErrorCode::EpisodeFinished, "episode is over; send reset")
            }
            Err(e) => Response::error(ErrorCode::Internal, e.to_string()),
        }
    }
}

/// Serves one session over a line stream until `close` or end of input.
/// Lines that are not UTF-8 get a `malformed` reply like any other bad
/// request.
pub fn serve_stream<R: BufRead, W: Write>(mut input: R, mut output: W, session: &mut Session) -> io::Result<()> {
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let reply = match std::str::from_utf8(&buf) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => session.handle_line(line.trim()),
            Err(_) => Response::error(ErrorCode::Malformed, "request is not UTF-8").into(),
        };
        output.write_all(reply.response.to_line().as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
        if reply.close {
            return Ok(());
        }
    }
}
