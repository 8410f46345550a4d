//! Fixed-size thread pool for session jobs.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

type Job = Box<dyn FnOnce() + Send + 'static>;

pub struct WorkerPool {
    sender: Mutex<Option<Sender<Job>>>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Self {
        let (tx, rx) = channel::<Job>();
        let rx = Arc::new(Mutex::new(rx));
        let handles = (0..workers.max(1))
            .map(|i| {
                let rx = Arc::clone(&rx);
                std::thread::Builder::new()
                    .name(format!("scenemask-worker-{i}"))
                    .spawn(move || worker_loop(&rx))
                    .expect("spawn worker thread")
            })
            .collect();
        WorkerPool {
            sender: Mutex::new(Some(tx)),
            handles,
        }
    }

    pub fn workers(&self) -> usize {
        self.handles.len()
    }

    /// Queues `job`; it runs once a worker is free. A panicking job takes
    /// down neither the worker nor the pool.
    pub fn submit(&self, job: impl FnOnce() + Send + 'static) {
        if let Some(tx) = self.sender.lock().expect("pool sender lock").as_ref() {
            let _ = tx.send(Box::new(job));
        }
    }
}

fn worker_loop(rx: &Mutex<Receiver<Job>>) {
    loop {
        let job = rx.lock().expect("pool receiver lock").recv();
        match job {
            Ok(job) => {
                if catch_unwind(AssertUnwindSafe(job)).is_err() {
                    tracing::error!("job panicked");
                }
            }
            Err(_) => return,
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        self.sender.lock().expect("pool sender lock").take();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
