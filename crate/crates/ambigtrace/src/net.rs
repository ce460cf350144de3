//! TCP transport: one request-response exchange per connection.
//!
//! All server-state mutation funnels through a single mutex. FETCH replies
//! are served from the immutable closed-day snapshots, so the lock is held
//! only for the map lookup, never while batch bytes are on the wire.
//! Frame-level garbage (unreadable header, unknown type byte) closes the
//! connection; well-framed but invalid payloads get an ERR reply.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;

use thiserror::Error;

use crate::group::{Group, GroupElement};
use crate::protocol::{BroadcastToken, RerandToken};
use crate::server::{Server, ServerError};
use crate::wire::{
    decode_request, decode_response, encode_request, encode_response, read_frame, write_frame,
    ErrorCode, Request, Response, WireError,
};

/// Default server address; the CLI lets `AMBIGTRACE_ADDR` override it.
pub const DEFAULT_ADDR: &str = "127.0.0.1:7340";

#[derive(Debug, Error)]
pub enum NetError {
    #[error("server refused: {0:?}")]
    Server(ErrorCode),
    #[error("unexpected reply type")]
    UnexpectedReply,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A running server: the bound address plus shared state, which tests and
/// the CLI use to drive day rollover directly.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub state: Arc<Mutex<Server>>,
}

/// Bind `addr` (port 0 picks a free port) and serve connections on a
/// background accept loop, one thread per connection.
pub fn spawn_server(server: Server, addr: &str) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let state = Arc::new(Mutex::new(server));
    let loop_state = Arc::clone(&state);
    thread::spawn(move || accept_loop(listener, loop_state));
    Ok(ServerHandle { addr, state })
}

fn accept_loop(listener: TcpListener, state: Arc<Mutex<Server>>) {
    for conn in listener.incoming() {
        match conn {
            Ok(stream) => {
                let state = Arc::clone(&state);
                thread::spawn(move || {
                    let _ = serve_connection(stream, &state);
                });
            }
            Err(_) => break,
        }
    }
}

/// Handle one connection: read a frame, dispatch, reply, close.
fn serve_connection(mut stream: TcpStream, state: &Mutex<Server>) -> Result<(), WireError> {
    let msg = read_frame(&mut stream)?;
    let (group, response) = dispatch(state, &msg);
    write_frame(&mut stream, &encode_response(&group, &response))
}

/// Decode and execute one request against the shared server state. The
/// lock is released before BATCH serialization; the Arc'd batch is an
/// immutable snapshot.
pub fn dispatch(state: &Mutex<Server>, msg: &crate::wire::WireMessage) -> (Arc<Group>, Response) {
    let mut srv = state.lock().expect("server mutex poisoned");
    let group = srv.group_arc();
    let request = match decode_request(&group, msg) {
        Ok(r) => r,
        Err(e) => {
            let code = match e {
                WireError::NonMember(_) => ErrorCode::NonMember,
                _ => ErrorCode::BadLength,
            };
            return (group, Response::Err(code));
        }
    };
    let response = match request {
        Request::Register { user_id, pk } => match srv.register(user_id, pk) {
            Ok(()) => Response::Ok,
            Err(ServerError::DuplicateUser(_)) => Response::Err(ErrorCode::DuplicateUser),
            Err(ServerError::ReportTooLarge { .. }) => Response::Err(ErrorCode::TooLarge),
        },
        Request::Report { tokens } => match srv.ingest_report(&tokens) {
            Ok(_) => Response::Ok,
            Err(ServerError::ReportTooLarge { .. }) => Response::Err(ErrorCode::TooLarge),
            Err(ServerError::DuplicateUser(_)) => Response::Err(ErrorCode::BadLength),
        },
        Request::Fetch { user_id, day } => {
            if srv.registry().get(user_id).is_none() {
                Response::Err(ErrorCode::UnknownUser)
            } else {
                let batch = if day == crate::wire::LATEST_DAY {
                    srv.latest_closed_batch()
                } else {
                    srv.closed_batch(day)
                };
                drop(srv);
                match batch {
                    None => Response::Err(ErrorCode::NoSuchDay),
                    Some(b) => Response::Batch {
                        day: b.day,
                        // a user registered after this day closed gets an
                        // empty list rather than an error
                        tokens: b.list_for(user_id).unwrap_or(&[]).to_vec(),
                    },
                }
            }
        }
    };
    (group, response)
}

/// One request-response exchange over a fresh connection.
pub fn exchange<A: ToSocketAddrs>(
    addr: A,
    group: &Group,
    request: &Request,
) -> Result<Response, NetError> {
    let mut stream = TcpStream::connect(addr)?;
    write_frame(&mut stream, &encode_request(group, request))?;
    let reply = read_frame(&mut stream)?;
    Ok(decode_response(group, &reply)?)
}

fn expect_ok(resp: Response) -> Result<(), NetError> {
    match resp {
        Response::Ok => Ok(()),
        Response::Err(code) => Err(NetError::Server(code)),
        Response::Batch { .. } => Err(NetError::UnexpectedReply),
    }
}

/// Register a public key under a user id.
pub fn register_remote<A: ToSocketAddrs>(
    addr: A,
    group: &Group,
    user_id: u64,
    pk: GroupElement,
) -> Result<(), NetError> {
    expect_ok(exchange(addr, group, &Request::Register { user_id, pk })?)
}

/// Submit an infection report.
pub fn report_remote<A: ToSocketAddrs>(
    addr: A,
    group: &Group,
    tokens: Vec<BroadcastToken>,
) -> Result<(), NetError> {
    expect_ok(exchange(addr, group, &Request::Report { tokens })?)
}

/// Fetch a personalized batch; `wire::LATEST_DAY` asks for the most
/// recently closed day. Returns the day the batch belongs to.
pub fn fetch_remote<A: ToSocketAddrs>(
    addr: A,
    group: &Group,
    user_id: u64,
    day: u32,
) -> Result<(u32, Vec<RerandToken>), NetError> {
    match exchange(addr, group, &Request::Fetch { user_id, day })? {
        Response::Batch { day, tokens } => Ok((day, tokens)),
        Response::Err(code) => Err(NetError::Server(code)),
        Response::Ok => Err(NetError::UnexpectedReply),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::ScalarRange;
    use crate::protocol::{keygen, make_token, risk_check};
    use crate::rng::seeded_rng;
    use crate::server::ServerConfig;
    use crate::wire::LATEST_DAY;
    use std::io::Write as _;

    fn toy_handle() -> ServerHandle {
        let server = Server::new(Arc::new(Group::toy()), ServerConfig::default());
        spawn_server(server, "127.0.0.1:0").expect("bind loopback")
    }

    #[test]
    fn register_report_fetch_round_trip() {
        let handle = toy_handle();
        let g = Group::toy();
        let mut rng = seeded_rng(8);
        let kp = keygen(&g, &mut rng);
        let alpha = g.random_scalar(ScalarRange::NonZero, &mut rng);
        let token = make_token(&g, &kp.secret, &alpha).unwrap();

        register_remote(handle.addr, &g, 7, kp.public.clone()).unwrap();
        // duplicate registration is refused with the right code
        let dup = register_remote(handle.addr, &g, 7, kp.public.clone());
        assert!(matches!(
            dup,
            Err(NetError::Server(ErrorCode::DuplicateUser))
        ));

        report_remote(handle.addr, &g, vec![token.clone()]).unwrap();
        // nothing closed yet
        let early = fetch_remote(handle.addr, &g, 7, LATEST_DAY);
        assert!(matches!(early, Err(NetError::Server(ErrorCode::NoSuchDay))));

        handle.state.lock().unwrap().end_of_day(&mut rng);

        let (day, tokens) = fetch_remote(handle.addr, &g, 7, LATEST_DAY).unwrap();
        assert_eq!(day, 0);
        assert_eq!(tokens.len(), 1);
        assert!(risk_check(&g, &kp.secret, &tokens[0]));

        // the same day by explicit number
        let (day, tokens) = fetch_remote(handle.addr, &g, 7, 0).unwrap();
        assert_eq!((day, tokens.len()), (0, 1));
        // a day that never closed
        assert!(matches!(
            fetch_remote(handle.addr, &g, 7, 3),
            Err(NetError::Server(ErrorCode::NoSuchDay))
        ));
        // an unknown user
        assert!(matches!(
            fetch_remote(handle.addr, &g, 99, LATEST_DAY),
            Err(NetError::Server(ErrorCode::UnknownUser))
        ));
    }

    #[test]
    fn invalid_payloads_get_err_replies() {
        let handle = toy_handle();
        let g = Group::toy();
        // REPORT carrying a non-member byte
        let msg = crate::wire::WireMessage {
            msg_type: crate::wire::MessageType::Report,
            payload: vec![0, 0, 0, 1, 5, 4],
        };
        let mut stream = TcpStream::connect(handle.addr).unwrap();
        write_frame(&mut stream, &msg).unwrap();
        let reply = read_frame(&mut stream).unwrap();
        assert_eq!(
            decode_response(&g, &reply).unwrap(),
            Response::Err(ErrorCode::NonMember)
        );

        // REGISTER with a short payload
        let msg = crate::wire::WireMessage {
            msg_type: crate::wire::MessageType::Register,
            payload: vec![1, 2, 3],
        };
        let mut stream = TcpStream::connect(handle.addr).unwrap();
        write_frame(&mut stream, &msg).unwrap();
        let reply = read_frame(&mut stream).unwrap();
        assert_eq!(
            decode_response(&g, &reply).unwrap(),
            Response::Err(ErrorCode::BadLength)
        );
    }

    #[test]
    fn oversized_reports_are_refused() {
        let g = Arc::new(Group::toy());
        let server = Server::new(
            Arc::clone(&g),
            ServerConfig {
                max_report_tokens: 2,
                max_pool_tokens: 1 << 20,
            },
        );
        let handle = spawn_server(server, "127.0.0.1:0").unwrap();
        let t = BroadcastToken {
            x: g.decode(&[4]).unwrap(),
            y: g.decode(&[18]).unwrap(),
        };
        let res = report_remote(handle.addr, &g, vec![t; 3]);
        assert!(matches!(res, Err(NetError::Server(ErrorCode::TooLarge))));
    }

    #[test]
    fn frame_garbage_closes_the_connection() {
        let handle = toy_handle();
        let mut stream = TcpStream::connect(handle.addr).unwrap();
        stream.write_all(b"hello there, server").unwrap();
        stream.flush().unwrap();
        // server drops the connection without a reply
        let result = read_frame(&mut stream);
        assert!(result.is_err());
    }

    #[test]
    fn concurrent_clients_are_serialized_safely() {
        let handle = toy_handle();
        let g = Arc::new(Group::toy());
        let mut joins = Vec::new();
        for i in 0..8u64 {
            let addr = handle.addr;
            let g = Arc::clone(&g);
            joins.push(thread::spawn(move || {
                let mut rng = seeded_rng(100 + i);
                let kp = keygen(&g, &mut rng);
                register_remote(addr, &g, i, kp.public).is_ok()
            }));
        }
        assert!(joins.into_iter().all(|j| j.join().unwrap()));
        assert_eq!(handle.state.lock().unwrap().registry().len(), 8);
    }
}
