//! Frame I/O over TCP.

use std::net::SocketAddr;
use std::time::Duration;

use serde_json::json;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tracing::{debug, warn};

use super::{RouteEntry, RuntimeError, AMS_NAME, MGMT_ONTOLOGY};
use crate::acl::frame::{decode_body, frame_len};
use crate::acl::{encode_frame, AclError, AclMessage, AgentId, Performative, FRAME_HEADER_LEN};

/// Reads one frame. `Ok(None)` on a clean EOF at a frame boundary. A body
/// that fails to decode is consumed in full and reported as an error; the
/// stream stays aligned.
pub async fn read_frame<R: AsyncRead + Unpin>(reader: &mut R) -> Result<Option<AclMessage>, FrameReadError> {
    let mut header = [0u8; FRAME_HEADER_LEN];
    match reader.read_exact(&mut header).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(FrameReadError::Io(e.to_string())),
    }
    let len = frame_len(header).map_err(FrameReadError::Fatal)?;
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).await.map_err(|e| FrameReadError::Io(e.to_string()))?;
    decode_body(&body).map(Some).map_err(FrameReadError::Skipped)
}

#[derive(Debug)]
pub enum FrameReadError {
    /// The connection is unusable.
    Io(String),
    /// The stream cannot be resynchronised (oversized announcement).
    Fatal(AclError),
    /// One frame was consumed but did not decode.
    Skipped(AclError),
}

pub async fn write_frame<W: AsyncWrite + Unpin>(writer: &mut W, msg: &AclMessage) -> Result<(), RuntimeError> {
    let frame = encode_frame(msg).map_err(|e| RuntimeError::Protocol(e.to_string()))?;
    writer.write_all(&frame).await.map_err(|e| RuntimeError::Io(e.to_string()))
}

/// Outgoing half of a link: frames queued here are written in order by a
/// dedicated task.
#[derive(Clone)]
pub(crate) struct LinkSender {
    tx: mpsc::UnboundedSender<Vec<u8>>,
}

impl LinkSender {
    pub(crate) fn spawn<W: AsyncWrite + Unpin + Send + 'static>(mut writer: W, peer: String) -> LinkSender {
        let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
        tokio::spawn(async move {
            while let Some(frame) = rx.recv().await {
                if let Err(e) = writer.write_all(&frame).await {
                    warn!(peer = %peer, error = %e, "link write failed");
                    break;
                }
            }
            let _ = writer.shutdown().await;
            debug!(peer = %peer, "link writer closed");
        });
        LinkSender { tx }
    }

    pub(crate) fn send(&self, msg: &AclMessage) -> bool {
        match encode_frame(msg) {
            Ok(frame) => self.tx.send(frame).is_ok(),
            Err(e) => {
                warn!(error = %e, "dropping unencodable message");
                false
            }
        }
    }

    pub(crate) fn is_closed(&self) -> bool {
        self.tx.is_closed()
    }
}

pub(crate) async fn connect(addr: &str, timeout: Duration) -> Result<TcpStream, RuntimeError> {
    let stream = tokio::time::timeout(timeout, TcpStream::connect(addr))
        .await
        .map_err(|_| RuntimeError::MainUnreachable(format!("{addr}: connect timed out")))?
        .map_err(|e| RuntimeError::MainUnreachable(format!("{addr}: {e}")))?;
    let _ = stream.set_nodelay(true);
    Ok(stream)
}

/// Asks a main container for its route table over a short-lived connection.
pub async fn query_ps(main: &str, platform: &str) -> Result<Vec<RouteEntry>, RuntimeError> {
    let mut stream = connect(main, Duration::from_secs(3)).await?;
    let ams = AgentId::new(AMS_NAME, platform).map_err(|e| RuntimeError::InvalidArguments(e.to_string()))?;
    let client = AgentId::new(format!("ps.{}", std::process::id()), platform)
        .map_err(|e| RuntimeError::InvalidArguments(e.to_string()))?;
    let req = AclMessage::new(Performative::Request, client)
        .to(ams)
        .ontology(MGMT_ONTOLOGY)
        .conversation("ps")
        .content(json!({"action": "ps"}));
    write_frame(&mut stream, &req).await?;
    let reply = tokio::time::timeout(Duration::from_secs(5), read_frame(&mut stream))
        .await
        .map_err(|_| RuntimeError::Timeout("ps reply".into()))?
        .map_err(|e| RuntimeError::Io(format!("{e:?}")))?
        .ok_or_else(|| RuntimeError::Io("connection closed before ps reply".into()))?;
    if reply.performative != Performative::Inform {
        let name = reply.content_str("error").unwrap_or("Protocol").to_string();
        return Err(RuntimeError::from_name(&name, reply.content_str("detail").unwrap_or("").to_string()));
    }
    serde_json::from_value(reply.content.get("agents").cloned().unwrap_or_default())
        .map_err(|e| RuntimeError::Protocol(e.to_string()))
}

pub(crate) fn peer_label(addr: Option<SocketAddr>) -> String {
    addr.map(|a| a.to_string()).unwrap_or_else(|| "?".into())
}
