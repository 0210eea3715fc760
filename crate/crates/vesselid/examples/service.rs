//! The live reslice service in one process: serves the phantom on a local
//! port, asks for `/meta`, posts a pose to `/reslice` and then drives the
//! `/stream` websocket along a short sweep, decoding every binary frame.
//!
//! cargo run --example service

use std::sync::Arc;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use vesselid::core::pipeline::{build_phantom, PipelineSpec};
use vesselid::core::preset::Preset;
use vesselid::core::Pose;
use vesselid::frame::Frame;
use vesselid::seg::vesselness::VesselnessSegmenter;
use vesselid::service::{router, ServiceState};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let (_, ph) = build_phantom(&PipelineSpec::new(Preset::Desk, 1))?;
    let grid = *ph.intensity.grid();
    let state = Arc::new(ServiceState {
        volume: ph.intensity,
        labels: ph.labels,
        geometry: Preset::Desk.crop(),
        segmenter: Some(Box::new(VesselnessSegmenter { config: Default::default() })),
    });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move { axum::serve(listener, router(state)).await });

    let meta: Value = serde_json::from_slice(&http(addr, "GET /meta", "").await?)?;
    println!("meta: dims {} spacing {} segmenter {}", meta["dims"], meta["spacing"], meta["segmenter"]);

    // Image plane on the grid's i/j axes, pixel (0, 0) on voxel (20, 0, k).
    let r = grid.direction();
    let pose_at = |k: usize| {
        let c = grid.voxel_center(20, 0, k);
        let m = [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], c.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], c.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], c.z,
            0.0, 0.0, 0.0, 1.0,
        ];
        Pose::from_row_major(&m).expect("rigid")
    };

    let reply = http(addr, "POST /reslice", &json!({ "pose": pose_at(48).to_row_major() }).to_string()).await?;
    let frame = Frame::decode(&reply)?;
    println!("reslice: {}x{} frame, {} bytes", frame.image.width(), frame.image.height(), reply.len());

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream")).await?;
    for step in 0..5 {
        ws.send(Message::Text(json!({ "pose": pose_at(40 + step * 4).to_row_major() }).to_string().into()))
            .await?;
        let head = match ws.next().await {
            Some(Ok(Message::Text(t))) => serde_json::from_str::<Value>(&t)?,
            other => anyhow::bail!("expected a frame header, got {other:?}"),
        };
        let frame = match ws.next().await {
            Some(Ok(Message::Binary(b))) => Frame::decode(&b)?,
            other => anyhow::bail!("expected a binary frame, got {other:?}"),
        };
        let vessel = frame.predicted.data().iter().filter(|&&l| l != 0).count();
        let truth = frame.ground_truth.data().iter().filter(|&&l| l != 0).count();
        println!(
            "seq {} slice {:>2}: {}x{} frame, {} predicted / {} true vessel pixels, outside {}",
            head["seq"], 40 + step * 4, frame.image.width(), frame.image.height(), vessel, truth, frame.outside
        );
    }
    ws.close(None).await?;
    Ok(())
}

/// Minimal HTTP/1.1 exchange so the example needs no HTTP client crate.
async fn http(addr: std::net::SocketAddr, request_line: &str, body: &str) -> anyhow::Result<Vec<u8>> {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = tokio::net::TcpStream::connect(addr).await?;
    let req = format!(
        "{request_line} HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    s.write_all(req.as_bytes()).await?;
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await?;
    let start = buf.windows(4).position(|w| w == b"\r\n\r\n").map_or(buf.len(), |p| p + 4);
    Ok(buf.split_off(start))
}
