use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use image::{DynamicImage, Rgb, RgbImage};

use scenemask::refselect::{baseline_embed, embed_all, EmbeddingProvider, RefSelectError};
use scenemask_service::embed_client::HttpEmbeddingProvider;

#[derive(Default)]
struct Counters {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
}

/// Fake model server: answers with the baseline embedding of the posted PNG
/// after a short delay so that requests overlap.
async fn embed(State(c): State<Arc<Counters>>, body: Bytes) -> Result<Json<Vec<f64>>, StatusCode> {
    let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    c.peak.fetch_max(now, Ordering::SeqCst);
    c.calls.fetch_add(1, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(30)).await;
    c.in_flight.fetch_sub(1, Ordering::SeqCst);
    let img = image::load_from_memory(&body).map_err(|_| StatusCode::BAD_REQUEST)?;
    Ok(Json(baseline_embed(&img).unwrap().values))
}

fn start(counters: Arc<Counters>) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/embed", post(embed))
                .route("/broken", post(|| async { StatusCode::INTERNAL_SERVER_ERROR }))
                .route("/zero", post(|| async { Json(vec![0.0; 4]) }))
                .with_state(counters);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn images(n: usize) -> Vec<DynamicImage> {
    (0..n)
        .map(|i| {
            DynamicImage::ImageRgb8(RgbImage::from_fn(24, 20, |x, y| {
                Rgb([(x * 10 + i as u32) as u8, (y * 12) as u8, (i * 20) as u8])
            }))
        })
        .collect()
}

#[test]
fn remote_embeddings_match_local_and_respect_the_bound() {
    let counters = Arc::new(Counters::default());
    let addr = start(counters.clone());
    let provider = HttpEmbeddingProvider::new(format!("http://{addr}/embed"), None, 3).unwrap();
    assert_eq!(provider.name(), format!("http:http://{addr}/embed"));
    let imgs = images(16);
    let remote = embed_all(&provider, &imgs).unwrap();
    assert_eq!(provider.dimension(), 256);
    for (r, img) in remote.iter().zip(&imgs) {
        let local = baseline_embed(img).unwrap();
        for (a, b) in r.values.iter().zip(&local.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(counters.calls.load(Ordering::SeqCst), 16);
    let peak = counters.peak.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak in flight {peak}");
}

#[test]
fn remote_failures_surface_as_provider_errors() {
    let addr = start(Arc::new(Counters::default()));
    let img = &images(1)[0];
    let broken = HttpEmbeddingProvider::new(format!("http://{addr}/broken"), None, 4).unwrap();
    assert!(matches!(broken.embed(img), Err(RefSelectError::Provider(_))));
    let zero = HttpEmbeddingProvider::new(format!("http://{addr}/zero"), None, 4).unwrap();
    assert!(zero.embed(img).is_err());
    let wrong_dim = HttpEmbeddingProvider::new(format!("http://{addr}/embed"), Some(8), 4).unwrap();
    assert!(matches!(wrong_dim.embed(img), Err(RefSelectError::DimensionMismatch(256, 8))));
}
