//! Wall-clock pacing of a shared session on a background thread.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::session::{Session, SessionError};

pub type SharedSession = Arc<Mutex<Session>>;

/// Longest sleep between checks of the stop flag.
const POLL: Duration = Duration::from_millis(5);

/// Steps a session so that simulated time follows wall time scaled by the
/// real-time factor. When compute falls behind, steps are run back to back
/// and the lag shows up in [`Session::status`]; no step is ever skipped.
/// The lock is released between steps so commands interleave with physics.
pub struct RealtimeRunner {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<(), SessionError>>>,
    session: SharedSession,
}

impl RealtimeRunner {
    pub fn start(session: SharedSession) -> Result<Self, SessionError> {
        session.lock().expect("session lock").start_pacing()?;
        let stop = Arc::new(AtomicBool::new(false));
        let (flag, shared) = (stop.clone(), session.clone());
        let thread = thread::Builder::new()
            .name("realtime".into())
            .spawn(move || run(&shared, &flag))
            .expect("spawn realtime thread");
        Ok(Self {
            stop,
            thread: Some(thread),
            session,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    /// Stops pacing and returns the error that ended the loop, if any.
    pub fn stop(mut self) -> Result<(), SessionError> {
        self.halt()
    }

    fn halt(&mut self) -> Result<(), SessionError> {
        self.stop.store(true, Ordering::Relaxed);
        let result = match self.thread.take() {
            Some(t) => t.join().expect("realtime thread panicked"),
            None => Ok(()),
        };
        self.session.lock().expect("session lock").stop_pacing();
        result
    }
}

impl Drop for RealtimeRunner {
    fn drop(&mut self) {
        if let Err(e) = self.halt() {
            log::warn!("real-time loop ended with an error: {e}");
        }
    }
}

fn run(session: &Mutex<Session>, stop: &AtomicBool) -> Result<(), SessionError> {
    while !stop.load(Ordering::Relaxed) {
        let wait = {
            let mut s = session.lock().expect("session lock");
            match s.next_step_in() {
                None => return Ok(()),
                Some(w) if w.is_zero() => {
                    if let Err(e) = s.advance() {
                        s.stop_pacing();
                        return Err(e);
                    }
                    continue;
                }
                Some(w) => w,
            }
        };
        thread::sleep(wait.min(POLL));
    }
    Ok(())
}
