//! Starts the session service on a free port and walks one placement through
//! it the way the browser client does: create, place, propagate, render,
//! poll, preview, export.
//!
//! cargo run -p scenemask-service --example http_session -- [out_dir]

use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use scenemask::bundle::save_bundle;
use scenemask::synth::{sphere_cloud, synthesize_scene, SyntheticSceneSpec};
use scenemask_service::{ServiceConfig, SessionManager};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("scenemask-session"), Into::into);
    let bundle_dir = out.join("bundle");
    let (mut bundle, gt) = synthesize_scene(&SyntheticSceneSpec::occluder_sweep(128, 96, 10))?;
    bundle.objects.insert("sphere".into(), sphere_cloud(800, 0.2));
    save_bundle(&bundle, &bundle_dir)?;

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
            tx.send(listener.local_addr().expect("address")).expect("send address");
            let manager = SessionManager::new(ServiceConfig::default());
            scenemask_service::http::serve(listener, manager, std::future::pending()).await.expect("serve");
        });
    });
    let base = format!("http://{}", rx.recv()?);
    let client = Client::new();
    let send = |req: reqwest::blocking::RequestBuilder| -> Result<Value, Box<dyn std::error::Error>> {
        let resp = req.send()?;
        let status = resp.status();
        let body: Value = resp.json()?;
        if !status.is_success() {
            return Err(format!("{status}: {body}").into());
        }
        Ok(body)
    };

    let session = send(client.post(format!("{base}/sessions")).json(&json!({"bundle_path": bundle_dir})))?;
    let id = session["id"].as_str().ok_or("no id")?.to_string();
    println!("session {id}: {} frames, default placement t = {}", session["frame_count"], session["placement"]["t"]);

    let placed = send(client.put(format!("{base}/sessions/{id}/placement")).json(&gt.suggested_placement))?;
    println!("placement committed at revision {}", placed["revision"]);

    for step in ["propagate", "render"] {
        let job = send(client.post(format!("{base}/sessions/{id}/{step}")))?;
        let job_id = job["job_id"].as_str().ok_or("no job id")?;
        loop {
            let progress = send(client.get(format!("{base}/jobs/{job_id}")))?;
            println!("{step}: {} {}/{}", progress["phase"], progress["completed"], progress["total"]);
            if progress["phase"] == "done" || progress["phase"] == "failed" {
                break;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    let preview = client.get(format!("{base}/sessions/{id}/preview/5")).send()?;
    let revision = preview.headers()["x-revision"].to_str()?.to_string();
    println!("preview of frame 5: {} PNG bytes at revision {revision}", preview.bytes()?.len());
    let scene = send(client.get(format!("{base}/sessions/{id}/scene/0?stride=4")))?;
    println!("frame 0 scene: {} points after decimation", scene["count"]);
    let summary = send(client.post(format!("{base}/sessions/{id}/export")).json(&json!({"out_dir": out.join("export")})))?;
    println!("exported {} frames to {}", summary["frame_count"], summary["out_dir"]);
    Ok(())
}
