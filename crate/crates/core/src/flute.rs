//! Simplified FLUTE-style delivery of segments as FEC source blocks.
//!
//! Every segment gets its own transport object and one FDT instance carrying
//! the FEC Object Transmission Information (`k` and symbol size). Symbol
//! payloads are synthetic: only their length is modeled, and whether a block
//! decodes is decided by the analytic failure curve in [`crate::fec`].
//!
//! Wire layout of a symbol datagram (all integers big-endian):
//!
//! ```text
//! magic 0x464C (2) | version 1 (1) | toi (4) | esi (4) | payload_len (2) | payload
//! ```
//!
//! An FDT instance is a text block of `key=value` lines, one instance per
//! datagram, with keys `toi`, `content-location`, `content-length`, `k`,
//! `symbol-size`, `instance-id` in that order.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fec::{decoder_failure_given_n, ErasureChannel, RaptorCode};
use crate::scalar::Scalar;

pub const PACKET_MAGIC: u16 = 0x464C;
pub const PACKET_VERSION: u8 = 1;
pub const PACKET_HEADER_LEN: usize = 13;

/// FEC Object Transmission Information carried in the FDT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FecOti {
    pub k: u32,
    pub symbol_size: u32,
}

/// FDT instance describing exactly one segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FdtInstance {
    pub toi: u32,
    pub content_location: String,
    pub content_length: u64,
    pub fec_oti: FecOti,
    pub instance_id: u32,
}

/// Builds the FDT instance for a segment protected by `code`.
pub fn build_fdt(
    toi: u32,
    content_location: &str,
    content_length: u64,
    code: &RaptorCode,
    instance_id: u32,
) -> Result<FdtInstance> {
    let fdt = FdtInstance {
        toi,
        content_location: content_location.to_owned(),
        content_length,
        fec_oti: FecOti { k: code.k(), symbol_size: code.symbol_size() },
        instance_id,
    };
    fdt.validate()?;
    Ok(fdt)
}

impl FdtInstance {
    fn validate(&self) -> Result<()> {
        if self.toi == 0 {
            return Err(Error::Framing("toi must be positive".into()));
        }
        if self.content_length == 0 {
            return Err(Error::Framing("content-length must be positive".into()));
        }
        if self.fec_oti.symbol_size == 0 {
            return Err(Error::Framing("symbol-size must be positive".into()));
        }
        if self.content_location.is_empty() || self.content_location.contains(['\n', '\r']) {
            return Err(Error::Framing("content-location must be a non-empty single line".into()));
        }
        let expected = self.content_length.div_ceil(self.fec_oti.symbol_size as u64);
        if expected != self.fec_oti.k as u64 {
            return Err(Error::Framing(format!(
                "k = {} does not match content-length {} at symbol-size {} (expected {expected})",
                self.fec_oti.k, self.content_length, self.fec_oti.symbol_size
            )));
        }
        Ok(())
    }

    pub fn serialize(&self) -> Vec<u8> {
        format!(
            "toi={}\ncontent-location={}\ncontent-length={}\nk={}\nsymbol-size={}\ninstance-id={}\n",
            self.toi,
            self.content_location,
            self.content_length,
            self.fec_oti.k,
            self.fec_oti.symbol_size,
            self.instance_id
        )
        .into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Framing(format!("fdt not utf-8: {e}")))?;
        let mut lines = text.lines();
        let mut next = |key: &str| -> Result<&str> {
            let line = lines.next().ok_or_else(|| Error::Framing(format!("missing `{key}`")))?;
            match line.split_once('=') {
                Some((k, v)) if k == key => Ok(v),
                _ => Err(Error::Framing(format!("expected `{key}=`, found `{line}`"))),
            }
        };
        fn num<N: std::str::FromStr>(key: &str, v: &str) -> Result<N> {
            v.parse().map_err(|_| Error::Framing(format!("bad `{key}` value `{v}`")))
        }
        let toi = num("toi", next("toi")?)?;
        let content_location = next("content-location")?.to_owned();
        let content_length = num("content-length", next("content-length")?)?;
        let k = num("k", next("k")?)?;
        let symbol_size = num("symbol-size", next("symbol-size")?)?;
        let instance_id = num("instance-id", next("instance-id")?)?;
        if lines.next().is_some() {
            return Err(Error::Framing("trailing data after fdt".into()));
        }
        let fdt = FdtInstance {
            toi,
            content_location,
            content_length,
            fec_oti: FecOti { k, symbol_size },
            instance_id,
        };
        fdt.validate()?;
        Ok(fdt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolRole {
    Source,
    Repair,
}

/// One encoding symbol in its own packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolPacket {
    pub toi: u32,
    /// Encoding symbol id; ids below `k` are source symbols.
    pub esi: u32,
    pub payload_len: u16,
}

impl SymbolPacket {
    pub fn role(&self, k: u32) -> SymbolRole {
        if self.esi < k {
            SymbolRole::Source
        } else {
            SymbolRole::Repair
        }
    }

    /// Header followed by `payload_len` zero bytes.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PACKET_HEADER_LEN + self.payload_len as usize);
        out.extend_from_slice(&PACKET_MAGIC.to_be_bytes());
        out.push(PACKET_VERSION);
        out.extend_from_slice(&self.toi.to_be_bytes());
        out.extend_from_slice(&self.esi.to_be_bytes());
        out.extend_from_slice(&self.payload_len.to_be_bytes());
        out.resize(PACKET_HEADER_LEN + self.payload_len as usize, 0);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PACKET_HEADER_LEN {
            return Err(Error::Framing(format!("packet too short: {} bytes", bytes.len())));
        }
        let magic = u16::from_be_bytes([bytes[0], bytes[1]]);
        if magic != PACKET_MAGIC {
            return Err(Error::Framing(format!("bad magic {magic:#06x}")));
        }
        if bytes[2] != PACKET_VERSION {
            return Err(Error::Framing(format!("unsupported version {}", bytes[2])));
        }
        let toi = u32::from_be_bytes(bytes[3..7].try_into().unwrap());
        let esi = u32::from_be_bytes(bytes[7..11].try_into().unwrap());
        let payload_len = u16::from_be_bytes([bytes[11], bytes[12]]);
        if bytes.len() - PACKET_HEADER_LEN != payload_len as usize {
            return Err(Error::Framing(format!(
                "payload length {} does not match header {payload_len}",
                bytes.len() - PACKET_HEADER_LEN
            )));
        }
        Ok(SymbolPacket { toi, esi, payload_len })
    }
}

/// A segment mapped onto exactly one source block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceBlockPlan {
    pub toi: u32,
    pub code: RaptorCode,
    pub content_length: u64,
}

impl SourceBlockPlan {
    pub fn new(toi: u32, code: RaptorCode, content_length: u64) -> Result<Self> {
        let k = content_length.div_ceil(code.symbol_size() as u64);
        if content_length == 0 || k != code.k() as u64 {
            return Err(Error::Framing(format!(
                "content-length {content_length} does not fill k = {} symbols of {} bytes",
                code.k(),
                code.symbol_size()
            )));
        }
        if code.symbol_size() > u16::MAX as u32 {
            return Err(Error::Framing(format!("symbol size {} exceeds u16", code.symbol_size())));
        }
        Ok(SourceBlockPlan { toi, code, content_length })
    }

    pub fn packet_count(&self) -> u32 {
        self.code.total()
    }
}

/// Emits the `k + r` symbol packets of a block in ESI order. The last source
/// symbol carries the remainder of the content.
pub fn packetize(plan: &SourceBlockPlan) -> Vec<SymbolPacket> {
    let k = plan.code.k();
    let size = plan.code.symbol_size() as u64;
    let tail = plan.content_length - (k as u64 - 1) * size;
    (0..plan.packet_count())
        .map(|esi| SymbolPacket {
            toi: plan.toi,
            esi,
            payload_len: if esi + 1 == k { tail as u16 } else { size as u16 },
        })
        .collect()
}

/// Drops each packet independently with probability `per`.
pub fn apply_channel_with<T: Scalar, P: Clone, R: Rng + ?Sized>(
    packets: &[P],
    channel: &ErasureChannel<T>,
    rng: &mut R,
) -> Vec<P> {
    let per = channel.per().to_f64().unwrap_or(1.0);
    packets.iter().filter(|_| !rng.gen_bool(per)).cloned().collect()
}

pub fn apply_channel<T: Scalar, P: Clone>(
    packets: &[P],
    channel: &ErasureChannel<T>,
    seed: u64,
) -> Vec<P> {
    apply_channel_with(packets, channel, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws the decoder outcome for `n_received` symbols. Returns `true` when
/// the block decodes.
pub fn adjudicate_decode_with<R: Rng + ?Sized>(
    code: &RaptorCode,
    n_received: u32,
    rng: &mut R,
) -> Result<bool> {
    let p_fail: f64 = decoder_failure_given_n(code, n_received)?;
    Ok(!rng.gen_bool(p_fail))
}

pub fn adjudicate_decode(code: &RaptorCode, n_received: u32, seed: u64) -> Result<bool> {
    adjudicate_decode_with(code, n_received, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A received datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Datagram {
    Fdt(FdtInstance),
    Symbol(SymbolPacket),
}

impl Datagram {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 2 && u16::from_be_bytes([bytes[0], bytes[1]]) == PACKET_MAGIC {
            SymbolPacket::parse(bytes).map(Datagram::Symbol)
        } else {
            FdtInstance::parse(bytes).map(Datagram::Fdt)
        }
    }

    pub fn serialize(&self) -> Vec<u8> {
        match self {
            Datagram::Fdt(fdt) => fdt.serialize(),
            Datagram::Symbol(pkt) => pkt.serialize(),
        }
    }
}

/// UDP transport for symbol and FDT datagrams. One socket, one owner.
#[derive(Debug)]
pub struct DatagramTransport {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl DatagramTransport {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        let socket = UdpSocket::bind(addr).map_err(|e| Error::Transport(e.to_string()))?;
        Ok(DatagramTransport { socket, buf: vec![0; 65_536] })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.socket.local_addr().map_err(|e| Error::Transport(e.to_string()))
    }

    pub fn set_read_timeout(&self, timeout: Option<std::time::Duration>) -> Result<()> {
        self.socket.set_read_timeout(timeout).map_err(|e| Error::Transport(e.to_string()))
    }

    pub fn send_to(&self, datagram: &Datagram, dest: SocketAddr) -> Result<()> {
        let bytes = datagram.serialize();
        let sent = self.socket.send_to(&bytes, dest).map_err(|e| Error::Transport(e.to_string()))?;
        if sent != bytes.len() {
            return Err(Error::Transport(format!("short send: {sent} of {}", bytes.len())));
        }
        Ok(())
    }

    pub fn recv(&mut self) -> Result<(Datagram, SocketAddr)> {
        let (n, from) = self.socket.recv_from(&mut self.buf).map_err(|e| Error::Transport(e.to_string()))?;
        Ok((Datagram::parse(&self.buf[..n])?, from))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(k: u32, r: u32) -> RaptorCode {
        RaptorCode::new(k, r, 1024).unwrap()
    }

    #[test]
    fn fdt_examples() {
        let fdt = build_fdt(1, "seg-1.m4s", 2048, &code(2, 0), 1).unwrap();
        assert_eq!(fdt.fec_oti.k, 2);
        let fdt = build_fdt(2, "seg-2.m4s", 2049, &code(3, 0), 2).unwrap();
        assert_eq!(fdt.fec_oti.k, 3);
        assert!(build_fdt(3, "seg-3.m4s", 2049, &code(2, 0), 3).is_err());
        assert!(build_fdt(0, "seg-3.m4s", 2048, &code(2, 0), 3).is_err());
        assert!(build_fdt(3, "a\nb", 2048, &code(2, 0), 3).is_err());
    }

    #[test]
    fn fdt_text_layout_is_pinned() {
        let fdt = build_fdt(7, "live/seg-7.m4s", 10240, &code(10, 2), 42).unwrap();
        let text = String::from_utf8(fdt.serialize()).unwrap();
        assert_eq!(
            text,
            "toi=7\ncontent-location=live/seg-7.m4s\ncontent-length=10240\nk=10\nsymbol-size=1024\ninstance-id=42\n"
        );
        assert_eq!(FdtInstance::parse(text.as_bytes()).unwrap(), fdt);
    }

    #[test]
    fn fdt_parse_rejects_garbage() {
        assert!(FdtInstance::parse(b"toi=1\n").is_err());
        assert!(FdtInstance::parse(b"k=1\ntoi=1\n").is_err());
        assert!(FdtInstance::parse(
            b"toi=1\ncontent-location=a\ncontent-length=2048\nk=5\nsymbol-size=1024\ninstance-id=1\n"
        )
        .is_err());
        assert!(FdtInstance::parse(&[0xff, 0xfe]).is_err());
    }

    #[test]
    fn packet_header_layout_is_pinned() {
        let pkt = SymbolPacket { toi: 0x0102_0304, esi: 0x0a0b_0c0d, payload_len: 3 };
        assert_eq!(
            pkt.serialize(),
            vec![0x46, 0x4c, 0x01, 0x01, 0x02, 0x03, 0x04, 0x0a, 0x0b, 0x0c, 0x0d, 0x00, 0x03, 0, 0, 0]
        );
    }

    #[test]
    fn packet_parse_errors() {
        let mut bytes = SymbolPacket { toi: 1, esi: 0, payload_len: 4 }.serialize();
        assert!(SymbolPacket::parse(&bytes[..5]).is_err());
        bytes.push(0);
        assert!(SymbolPacket::parse(&bytes).is_err());
        bytes.pop();
        bytes[2] = 2;
        assert!(SymbolPacket::parse(&bytes).is_err());
        bytes[0] = 0;
        assert!(SymbolPacket::parse(&bytes).is_err());
    }

    #[test]
    fn packetize_examples() {
        let plan = SourceBlockPlan::new(1, code(2, 0), 2048).unwrap();
        let pkts = packetize(&plan);
        assert_eq!(pkts.len(), 2);
        assert!(pkts.iter().all(|p| p.role(2) == SymbolRole::Source));

        let plan = SourceBlockPlan::new(1, code(2, 2), 2048).unwrap();
        let pkts = packetize(&plan);
        let esis: Vec<u32> = pkts.iter().map(|p| p.esi).collect();
        assert_eq!(esis, vec![0, 1, 2, 3]);
        assert_eq!(pkts[1].role(2), SymbolRole::Source);
        assert_eq!(pkts[2].role(2), SymbolRole::Repair);

        let c = crate::fec::code_for_segment(10240, 1024, 0.84).unwrap();
        assert_eq!(packetize(&SourceBlockPlan::new(9, c, 10240).unwrap()).len(), 12);
    }

    #[test]
    fn packetize_short_tail() {
        let plan = SourceBlockPlan::new(1, code(3, 1), 2049).unwrap();
        let lens: Vec<u16> = packetize(&plan).iter().map(|p| p.payload_len).collect();
        assert_eq!(lens, vec![1024, 1024, 1, 1024]);
        assert!(SourceBlockPlan::new(1, code(2, 1), 2049).is_err());
    }

    #[test]
    fn channel_extremes() {
        let plan = SourceBlockPlan::new(1, code(8, 4), 8192).unwrap();
        let pkts = packetize(&plan);
        assert_eq!(apply_channel(&pkts, &ErasureChannel::new(0.0).unwrap(), 1).len(), 12);
        assert!(apply_channel(&pkts, &ErasureChannel::new(1.0).unwrap(), 1).is_empty());
    }

    #[test]
    fn channel_survival_fraction() {
        let pkts: Vec<u32> = (0..100_000).collect();
        let survivors = apply_channel(&pkts, &ErasureChannel::new(0.5).unwrap(), 99);
        let frac = survivors.len() as f64 / pkts.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
        // survivors keep their relative order
        assert!(survivors.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn decode_adjudication() {
        let c = code(10, 40);
        for seed in 0..200 {
            assert!(!adjudicate_decode(&c, 9, seed).unwrap());
            assert!(adjudicate_decode(&c, 50, seed).unwrap());
        }
        assert!(adjudicate_decode(&c, 51, 0).is_err());
    }

    #[test]
    fn loopback_transport() {
        let mut rx = DatagramTransport::bind("127.0.0.1:0").unwrap();
        rx.set_read_timeout(Some(std::time::Duration::from_secs(5))).unwrap();
        let tx = DatagramTransport::bind("127.0.0.1:0").unwrap();
        let dest = rx.local_addr().unwrap();

        let c = code(3, 1);
        let fdt = build_fdt(5, "seg-5.m4s", 2049, &c, 1).unwrap();
        tx.send_to(&Datagram::Fdt(fdt.clone()), dest).unwrap();
        let pkts = packetize(&SourceBlockPlan::new(5, c, 2049).unwrap());
        for p in &pkts {
            tx.send_to(&Datagram::Symbol(*p), dest).unwrap();
        }
        let (first, _) = rx.recv().unwrap();
        assert_eq!(first, Datagram::Fdt(fdt));
        for p in &pkts {
            let (got, _) = rx.recv().unwrap();
            assert_eq!(got, Datagram::Symbol(*p));
        }
    }
}
