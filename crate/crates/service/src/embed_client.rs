//! Embedding provider backed by an external HTTP service.
//!
//! The service receives PNG bytes in a POST body and answers with a JSON
//! array of reals.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use image::DynamicImage;
use scenemask::bundle::encode_png;
use scenemask::refselect::{Embedding, EmbeddingProvider, RefSelectError};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

pub struct HttpEmbeddingProvider {
    url: String,
    name: String,
    client: reqwest::blocking::Client,
    dimension: OnceLock<usize>,
    gate: Gate,
}

impl HttpEmbeddingProvider {
    /// `dimension` may be left open; it is then fixed by the first response.
    pub fn new(url: impl Into<String>, dimension: Option<usize>, max_in_flight: usize) -> Result<Self, RefSelectError> {
        let url = url.into();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| RefSelectError::Provider(e.to_string()))?;
        let fixed = OnceLock::new();
        if let Some(d) = dimension {
            let _ = fixed.set(d);
        }
        Ok(HttpEmbeddingProvider {
            name: format!("http:{url}"),
            url,
            client,
            dimension: fixed,
            gate: Gate::new(max_in_flight.max(1)),
        })
    }

    pub fn max_in_flight(&self) -> usize {
        self.gate.limit
    }

    fn request(&self, png: Vec<u8>) -> Result<Vec<f64>, RefSelectError> {
        let _permit = self.gate.acquire();
        let resp = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(png)
            .send()
            .map_err(|e| RefSelectError::Provider(format!("{}: {e}", self.url)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(RefSelectError::Provider(format!("{} answered {status}", self.url)));
        }
        resp.json::<Vec<f64>>()
            .map_err(|e| RefSelectError::Provider(format!("{}: bad response body: {e}", self.url)))
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension.get().copied().unwrap_or(0)
    }

    fn embed(&self, image: &DynamicImage) -> Result<Embedding, RefSelectError> {
        let values = self.request(encode_png(&image.to_rgb8()))?;
        let dim = *self.dimension.get_or_init(|| values.len());
        if values.len() != dim {
            return Err(RefSelectError::DimensionMismatch(values.len(), dim));
        }
        Embedding::normalized(values)
    }
}

/// Counting semaphore.
struct Gate {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Gate {
            limit,
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().expect("gate lock");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}
