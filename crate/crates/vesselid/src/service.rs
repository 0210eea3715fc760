//! Local HTTP service behind the probe console.
//!
//! - `GET /meta`: volume dims, spacing, frame geometry and the label names.
//! - `POST /reslice`: a pose (4×4 row-major, nested or flat, optionally
//!   wrapped as `{"pose": ...}`) → one binary [`Frame`].
//! - `GET /stream`: WebSocket. The client sends poses as text messages; the
//!   server renders the newest pending pose, sends a JSON text message
//!   `{"type":"frame","seq":..,"pose":[..],"outside":..}` and then the binary
//!   frame with the same sequence number in its header. Poses arriving while
//!   a frame renders are coalesced to the newest one.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::{mpsc, watch};

use vesselid_core::evaluation::Segmenter;
use vesselid_core::reslice::sample_plane;
use vesselid_core::{BranchId, Error as CoreError, ImageGeometry, PlaneMapping, Pose, Volume};

use crate::frame::Frame;

/// Read-only artifacts shared by every request.
pub struct ServiceState {
    pub volume: Volume<f32>,
    pub labels: Volume<u8>,
    /// Geometry of the frames served.
    pub geometry: ImageGeometry,
    pub segmenter: Option<Box<dyn Segmenter>>,
}

impl ServiceState {
    /// Reslices at `pose` and segments the slice. A plane that misses the
    /// volume yields a flagged all-background frame.
    pub fn render(&self, pose: &Pose, seq: u16) -> vesselid_core::Result<Frame> {
        let g = &self.geometry;
        let (image, ground_truth) = match sample_plane(&self.volume, &self.labels, pose, g) {
            Ok(v) => v,
            Err(CoreError::PlaneMissesVolume) => return Ok(Frame::outside(g.width, g.height, seq)),
            Err(e) => return Err(e),
        };
        let (predicted, has_prediction) = match &self.segmenter {
            Some(s) => (s.predict(&image, &PlaneMapping::new(*pose, g))?.into_mask(), true),
            None => (vesselid_core::image::LabelImage::filled(g.width, g.height, 0), false),
        };
        Ok(Frame {
            image,
            predicted,
            ground_truth,
            outside: false,
            has_prediction,
            seq,
        })
    }

    pub fn meta(&self) -> Value {
        let grid = self.volume.grid();
        json!({
            "dims": grid.dims,
            "spacing": grid.spacing,
            "origin": grid.origin,
            "frame": {
                "width": self.geometry.width,
                "height": self.geometry.height,
                "spacing": self.geometry.spacing,
            },
            "labels": BranchId::ALL.iter().map(|b| json!({
                "id": b.as_u8(),
                "name": b.name(),
                "description": b.description(),
            })).collect::<Vec<_>>(),
            "segmenter": self.segmenter.as_ref().map(|s| s.name().to_string()),
            "frame_magic": std::str::from_utf8(&crate::frame::FRAME_MAGIC).unwrap_or_default(),
        })
    }
}

/// Accepts `[16 numbers]`, `[[4], [4], [4], [4]]` or either wrapped as
/// `{"pose": ...}`.
pub fn parse_pose(v: &Value) -> Result<Pose, String> {
    let v = match v {
        Value::Object(o) => o.get("pose").ok_or("expected a `pose` field")?,
        other => other,
    };
    let rows = v.as_array().ok_or("pose must be a JSON array")?;
    let flat: Vec<&Value> = if rows.len() == 4 && rows.iter().all(Value::is_array) {
        rows.iter().flat_map(|r| r.as_array().into_iter().flatten()).collect()
    } else {
        rows.iter().collect()
    };
    let nums = flat
        .iter()
        .map(|x| x.as_f64().ok_or("pose entries must be numbers"))
        .collect::<Result<Vec<f64>, _>>()?;
    if nums.len() != 16 {
        return Err(format!("pose needs 16 numbers, got {}", nums.len()));
    }
    Pose::from_row_major(&nums).map_err(|e| e.to_string())
}

fn json_error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn meta(State(st): State<Arc<ServiceState>>) -> Json<Value> {
    Json(st.meta())
}

async fn reslice(State(st): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return json_error(StatusCode::BAD_REQUEST, format!("body is not JSON: {e}")),
    };
    let pose = match parse_pose(&value) {
        Ok(p) => p,
        Err(e) => return json_error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    match tokio::task::spawn_blocking(move || st.render(&pose, 0)).await {
        Ok(Ok(frame)) => ([(header::CONTENT_TYPE, "application/octet-stream")], frame.encode()).into_response(),
        Ok(Err(e)) => json_error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => json_error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn stream(State(st): State<Arc<ServiceState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| run_stream(st, socket))
}

async fn run_stream(st: Arc<ServiceState>, socket: WebSocket) {
    let (mut tx, mut rx) = socket.split();
    let (pose_tx, mut pose_rx) = watch::channel::<Option<(u64, Pose)>>(None);
    let (err_tx, mut err_rx) = mpsc::unbounded_channel::<String>();

    let reader = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(Ok(msg)) = rx.next().await {
            let text = match msg {
                Message::Text(t) => t.to_string(),
                Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                Message::Close(_) => break,
                _ => continue,
            };
            let parsed = serde_json::from_str::<Value>(&text)
                .map_err(|e| format!("pose is not JSON: {e}"))
                .and_then(|v| parse_pose(&v));
            match parsed {
                Ok(p) => {
                    seq += 1;
                    if pose_tx.send(Some((seq, p))).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    if err_tx.send(e).is_err() {
                        break;
                    }
                }
            }
        }
    });

    loop {
        tokio::select! {
            changed = pose_rx.changed() => {
                if changed.is_err() {
                    break;
                }
                let Some((seq, pose)) = *pose_rx.borrow_and_update() else { continue };
                let s = st.clone();
                let frame = match tokio::task::spawn_blocking(move || s.render(&pose, seq as u16)).await {
                    Ok(Ok(f)) => f,
                    Ok(Err(e)) => {
                        let _ = tx.send(Message::Text(json!({"type": "error", "error": e.to_string()}).to_string().into())).await;
                        continue;
                    }
                    Err(_) => break,
                };
                let head = json!({"type": "frame", "seq": seq, "pose": pose, "outside": frame.outside});
                if tx.send(Message::Text(head.to_string().into())).await.is_err()
                    || tx.send(Message::Binary(frame.encode().into())).await.is_err()
                {
                    break;
                }
            }
            Some(e) = err_rx.recv() => {
                if tx.send(Message::Text(json!({"type": "error", "error": e}).to_string().into())).await.is_err() {
                    break;
                }
            }
        }
    }
    reader.abort();
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/reslice", post(reslice))
        .route("/stream", get(stream))
        .with_state(state)
}

/// Binds `addr` and serves until the process is interrupted.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
