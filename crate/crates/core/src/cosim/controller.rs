use std::io::{Read, Write};

use num_complex::Complex64;

use super::frame::{Frame, FrameKind};
use super::link::{read_frame, write_frame, CommandReply, DeviceReply, LinkError, SampleRequest, PHASES};
use crate::deployment::DeploymentConfig;
use crate::device::{device_step, DeviceInput, DeviceState};
use crate::phasor::Phase;
use crate::time::SimTime;

/// Device side of the link: serves the first device of each phase of one
/// deployment until the simulator says `Bye` or closes the stream.
/// Returns the number of sample requests answered.
pub fn serve_controller<R: Read, W: Write>(
    mut reader: R,
    mut writer: W,
    cfg: &DeploymentConfig,
    dt_s: f64,
) -> Result<u64, LinkError> {
    let fault = |w: &mut W, seq: u32, code: f64| {
        let _ = write_frame(w, &Frame::new(FrameKind::Fault, seq, 0, vec![Complex64::new(code, 0.0)]));
    };
    let hello = match read_frame(&mut reader)? {
        None => return Ok(0),
        Some(f) => f,
    };
    if hello.kind != FrameKind::Hello {
        fault(&mut writer, hello.seq, 1.0);
        return Err(LinkError::Protocol(format!("expected Hello, got {:?}", hello.kind)));
    }
    write_frame(
        &mut writer,
        &Frame::new(FrameKind::Hello, hello.seq, 0, vec![Complex64::new(PHASES as f64, 0.0)]),
    )?;

    let base = cfg.device_params();
    let mut devices: [DeviceState; PHASES] = Phase::ALL.map(DeviceState::new);
    let mut last_seq = hello.seq;
    let mut served = 0;
    loop {
        let frame = match read_frame(&mut reader)? {
            None => return Ok(served),
            Some(f) => f,
        };
        match frame.kind {
            FrameKind::Bye => {
                let _ = write_frame(&mut writer, &Frame::new(FrameKind::Bye, frame.seq, frame.t_ns, vec![]));
                return Ok(served);
            }
            FrameKind::SampleRequest => {}
            other => {
                fault(&mut writer, frame.seq, 1.0);
                return Err(LinkError::Protocol(format!("unexpected {other:?} frame")));
            }
        }
        if frame.seq <= last_seq {
            fault(&mut writer, frame.seq, 2.0);
            return Err(LinkError::Protocol(format!("seq {} after {last_seq}", frame.seq)));
        }
        last_seq = frame.seq;
        let req = match SampleRequest::from_channels(&frame.channels) {
            Ok(r) => r,
            Err(e) => {
                fault(&mut writer, frame.seq, 3.0);
                return Err(e);
            }
        };
        let mut params = base.clone();
        params.protection.oc_enabled = req.oc_enabled;
        params.protection.lor_enabled = req.lor_enabled;
        let t = SimTime(frame.t_ns);
        let mut replies = Vec::with_capacity(PHASES);
        for (k, dev) in devices.iter_mut().enumerate() {
            let input = DeviceInput {
                i_line: req.currents[k],
                backup_lor: req.backup_lor[k],
                ipb_cmd: req.ipb[k],
            };
            let (next, _) = match device_step(dev, &params, &req.command, &input, t, dt_s) {
                Ok(r) => r,
                Err(e) => {
                    fault(&mut writer, frame.seq, 4.0);
                    return Err(LinkError::Protocol(e.to_string()));
                }
            };
            *dev = next;
            replies.push(DeviceReply {
                injection: dev.last_injection,
                mode: dev.mode_state,
                vsl_closed: dev.vsl_closed,
                cause: dev.bypass_cause,
            });
        }
        let reply = CommandReply {
            devices: [replies[0], replies[1], replies[2]],
        };
        write_frame(
            &mut writer,
            &Frame::new(FrameKind::CommandReply, frame.seq, frame.t_ns, reply.to_channels()),
        )?;
        served += 1;
    }
}
