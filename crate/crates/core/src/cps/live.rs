//! Live per-process counter collection through Linux `perf_event_open`.
//!
//! One producer thread reads three counters per monitored process every
//! `interval_us` and pushes the per-interval deltas onto a bounded ring.
//! When the consumer falls behind, the oldest samples are dropped.
//! Counters are opened with kernel and hypervisor events excluded so the
//! collector works at `perf_event_paranoid` level 2.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::CpsSample;
use crate::error::{Error, Result};

/// Finest sampling interval the collector accepts.
pub const MIN_RESOLUTION_US: u64 = 3;

const RING_CAPACITY: usize = 1 << 16;

pub const EVENTS: [&str; 3] = ["L3_TCA", "L3_TCM", "TOT_INS"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectorCapability {
    pub available: bool,
    pub resolution_us: u64,
    pub events: Vec<String>,
    /// Why collection is unavailable, when it is.
    pub reason: Option<String>,
}

impl CollectorCapability {
    pub fn unavailable(reason: impl Into<String>) -> Self {
        CollectorCapability {
            available: false,
            resolution_us: 0,
            events: Vec::new(),
            reason: Some(reason.into()),
        }
    }

    /// Opens (and immediately closes) the three counters on this process.
    pub fn probe() -> Self {
        match sys::probe() {
            Ok(()) => CollectorCapability {
                available: true,
                resolution_us: MIN_RESOLUTION_US,
                events: EVENTS.iter().map(|e| e.to_string()).collect(),
                reason: None,
            },
            Err(reason) => Self::unavailable(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveConfig {
    pub interval_us: u64,
    pub duration_s: u64,
    /// Processes to monitor; empty means every process that can be opened.
    pub pids: Vec<u32>,
}

#[derive(Debug, Default)]
pub struct LiveStats {
    emitted: AtomicU64,
    overflow_drops: AtomicU64,
    backpressure_drops: AtomicU64,
}

impl LiveStats {
    pub fn emitted(&self) -> u64 {
        self.emitted.load(Ordering::Relaxed)
    }

    /// Readings discarded because a counter wrapped or misses exceeded
    /// accesses within one interval.
    pub fn overflow_drops(&self) -> u64 {
        self.overflow_drops.load(Ordering::Relaxed)
    }

    /// Samples evicted from the ring because the consumer was too slow.
    pub fn backpressure_drops(&self) -> u64 {
        self.backpressure_drops.load(Ordering::Relaxed)
    }
}

struct Ring {
    queue: Mutex<VecDeque<CpsSample>>,
    ready: Condvar,
    done: AtomicBool,
    capacity: usize,
}

impl Ring {
    fn push(&self, sample: CpsSample, stats: &LiveStats) {
        let mut q = self.queue.lock().unwrap_or_else(|p| p.into_inner());
        if q.len() == self.capacity {
            q.pop_front();
            stats.backpressure_drops.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(sample);
        stats.emitted.fetch_add(1, Ordering::Relaxed);
        self.ready.notify_one();
    }

    fn finish(&self) {
        let _guard = self.queue.lock().unwrap_or_else(|p| p.into_inner());
        self.done.store(true, Ordering::Release);
        self.ready.notify_all();
    }
}

/// Blocking iterator over live samples; ends when the duration elapses.
pub struct LiveStream {
    ring: Arc<Ring>,
    stats: Arc<LiveStats>,
    monitored: Vec<(u32, String)>,
    producer: Option<thread::JoinHandle<()>>,
}

impl LiveStream {
    pub fn stats(&self) -> &LiveStats {
        &self.stats
    }

    pub fn monitored(&self) -> &[(u32, String)] {
        &self.monitored
    }
}

impl Iterator for LiveStream {
    type Item = CpsSample;

    fn next(&mut self) -> Option<CpsSample> {
        let mut q = self.ring.queue.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            if let Some(s) = q.pop_front() {
                return Some(s);
            }
            if self.ring.done.load(Ordering::Acquire) {
                drop(q);
                if let Some(h) = self.producer.take() {
                    let _ = h.join();
                }
                return None;
            }
            q = self.ring.ready.wait(q).unwrap_or_else(|p| p.into_inner());
        }
    }
}

/// Validates a request against a capability without touching hardware.
pub fn check_request(cap: &CollectorCapability, config: &LiveConfig) -> Result<()> {
    if !cap.available {
        return Err(Error::Capability {
            reason: cap
                .reason
                .clone()
                .unwrap_or_else(|| "hardware counters unavailable".into()),
            hint: "run on Linux with access to hardware counters, e.g. \
                   `sysctl kernel.perf_event_paranoid=2` or CAP_PERFMON"
                .into(),
        });
    }
    if config.interval_us < cap.resolution_us {
        return Err(Error::Precondition(format!(
            "interval {} us is below the collector resolution of {} us",
            config.interval_us, cap.resolution_us
        )));
    }
    Ok(())
}

/// Starts collection on the current host.
pub fn collect_live(config: &LiveConfig) -> Result<LiveStream> {
    let cap = CollectorCapability::probe();
    check_request(&cap, config)?;

    let candidates: Vec<u32> = if config.pids.is_empty() {
        sys::all_pids()
    } else {
        config.pids.clone()
    };
    let mut groups = Vec::new();
    for pid in candidates {
        match sys::CounterSet::open(pid) {
            Ok(set) => groups.push(set),
            Err(e) if !config.pids.is_empty() => {
                return Err(Error::Capability {
                    reason: format!("cannot monitor pid {pid}: {e}"),
                    hint: "check the pid exists and that you may trace it".into(),
                })
            }
            Err(_) => {}
        }
    }
    if groups.is_empty() {
        return Err(Error::Capability {
            reason: "no process could be monitored".into(),
            hint: "pass --pid for a process you own or raise privileges".into(),
        });
    }

    let ring = Arc::new(Ring {
        queue: Mutex::new(VecDeque::new()),
        ready: Condvar::new(),
        done: AtomicBool::new(false),
        capacity: RING_CAPACITY,
    });
    let stats = Arc::new(LiveStats::default());
    let monitored = groups.iter().map(|g| (g.pid, g.name.clone())).collect();
    let interval = Duration::from_micros(config.interval_us);
    let duration = Duration::from_secs(config.duration_s);

    let producer = {
        let ring = Arc::clone(&ring);
        let stats = Arc::clone(&stats);
        thread::spawn(move || {
            let start = Instant::now();
            let mut prev: Vec<Option<[u64; 3]>> = groups.iter().map(|g| g.read().ok()).collect();
            let mut tick = 1u32;
            loop {
                let deadline = start + interval * tick;
                if deadline > start + duration {
                    break;
                }
                let now = Instant::now();
                if deadline > now {
                    thread::sleep(deadline - now);
                }
                tick += 1;
                let ts = start.elapsed().as_micros() as u64;
                for (g, last) in groups.iter().zip(prev.iter_mut()) {
                    let Ok(cur) = g.read() else { continue };
                    if let Some(old) = last.replace(cur) {
                        let delta = [
                            cur[0].checked_sub(old[0]),
                            cur[1].checked_sub(old[1]),
                            cur[2].checked_sub(old[2]),
                        ];
                        match delta {
                            [Some(tca), Some(tcm), Some(ins)] if tcm <= tca => ring.push(
                                CpsSample {
                                    timestamp_us: ts,
                                    pid: g.pid,
                                    process_name: g.name.clone(),
                                    l3_tca: tca,
                                    l3_tcm: tcm,
                                    tot_ins: ins,
                                    label: None,
                                },
                                &stats,
                            ),
                            _ => {
                                stats.overflow_drops.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                    }
                }
            }
            ring.finish();
        })
    };

    Ok(LiveStream {
        ring,
        stats,
        monitored,
        producer: Some(producer),
    })
}

#[cfg(target_os = "linux")]
mod sys {
    use std::fs;
    use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};

    // perf_event_attr, first ABI revision (PERF_ATTR_SIZE_VER0 = 64 bytes).
    #[repr(C)]
    #[derive(Default)]
    struct PerfEventAttr {
        type_: u32,
        size: u32,
        config: u64,
        sample_period: u64,
        sample_type: u64,
        read_format: u64,
        flags: u64,
        wakeup_events: u32,
        bp_type: u32,
        config1: u64,
    }

    const PERF_TYPE_HARDWARE: u32 = 0;
    const PERF_TYPE_HW_CACHE: u32 = 3;
    const PERF_COUNT_HW_INSTRUCTIONS: u64 = 1;
    const PERF_COUNT_HW_CACHE_LL: u64 = 2;
    const PERF_COUNT_HW_CACHE_OP_READ: u64 = 0;
    const PERF_COUNT_HW_CACHE_RESULT_ACCESS: u64 = 0;
    const PERF_COUNT_HW_CACHE_RESULT_MISS: u64 = 1;
    const FLAG_EXCLUDE_KERNEL: u64 = 1 << 5;
    const FLAG_EXCLUDE_HV: u64 = 1 << 6;
    const PERF_FLAG_FD_CLOEXEC: libc::c_ulong = 1 << 3;

    fn ll_cache(result: u64) -> u64 {
        PERF_COUNT_HW_CACHE_LL | (PERF_COUNT_HW_CACHE_OP_READ << 8) | (result << 16)
    }

    const EVENTS: [(u32, fn() -> u64); 3] = [
        (PERF_TYPE_HW_CACHE, || ll_cache(PERF_COUNT_HW_CACHE_RESULT_ACCESS)),
        (PERF_TYPE_HW_CACHE, || ll_cache(PERF_COUNT_HW_CACHE_RESULT_MISS)),
        (PERF_TYPE_HARDWARE, || PERF_COUNT_HW_INSTRUCTIONS),
    ];

    fn open(type_: u32, config: u64, pid: i32) -> std::io::Result<OwnedFd> {
        let attr = PerfEventAttr {
            type_,
            size: std::mem::size_of::<PerfEventAttr>() as u32,
            config,
            flags: FLAG_EXCLUDE_KERNEL | FLAG_EXCLUDE_HV,
            ..Default::default()
        };
        // SAFETY: attr is a valid, fully initialized perf_event_attr of the
        // size it declares; the kernel only reads it.
        let fd = unsafe {
            libc::syscall(
                libc::SYS_perf_event_open,
                &attr as *const PerfEventAttr,
                pid as libc::pid_t,
                -1 as libc::c_int,
                -1 as libc::c_int,
                PERF_FLAG_FD_CLOEXEC,
            )
        };
        if fd < 0 {
            return Err(std::io::Error::last_os_error());
        }
        // SAFETY: the syscall returned a fresh descriptor we now own.
        Ok(unsafe { OwnedFd::from_raw_fd(fd as i32) })
    }

    pub(super) fn probe() -> Result<(), String> {
        for (type_, config) in EVENTS {
            open(type_, config(), 0).map_err(|e| format!("perf_event_open failed: {e}"))?;
        }
        Ok(())
    }

    pub(super) fn all_pids() -> Vec<u32> {
        let mut pids: Vec<u32> = fs::read_dir("/proc")
            .map(|rd| {
                rd.filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
                    .collect()
            })
            .unwrap_or_default();
        pids.sort_unstable();
        pids
    }

    pub(super) struct CounterSet {
        pub pid: u32,
        pub name: String,
        fds: [OwnedFd; 3],
    }

    impl CounterSet {
        pub fn open(pid: u32) -> std::io::Result<Self> {
            let name = fs::read_to_string(format!("/proc/{pid}/comm"))
                .map(|s| s.trim().to_string())
                .unwrap_or_default();
            let [a, b, c] = EVENTS;
            let fds = [
                open(a.0, (a.1)(), pid as i32)?,
                open(b.0, (b.1)(), pid as i32)?,
                open(c.0, (c.1)(), pid as i32)?,
            ];
            Ok(CounterSet { pid, name, fds })
        }

        pub fn read(&self) -> std::io::Result<[u64; 3]> {
            let mut out = [0u64; 3];
            for (fd, slot) in self.fds.iter().zip(out.iter_mut()) {
                let mut buf = [0u8; 8];
                // SAFETY: buf is 8 writable bytes and fd is an open perf fd.
                let n = unsafe { libc::read(fd.as_raw_fd(), buf.as_mut_ptr().cast(), buf.len()) };
                if n != 8 {
                    return Err(std::io::Error::last_os_error());
                }
                *slot = u64::from_ne_bytes(buf);
            }
            Ok(out)
        }
    }
}

#[cfg(not(target_os = "linux"))]
mod sys {
    pub(super) fn probe() -> Result<(), String> {
        Err("live collection is only implemented for Linux".into())
    }

    pub(super) fn all_pids() -> Vec<u32> {
        Vec::new()
    }

    pub(super) struct CounterSet {
        pub pid: u32,
        pub name: String,
    }

    impl CounterSet {
        pub fn open(_pid: u32) -> std::io::Result<Self> {
            Err(std::io::Error::from(std::io::ErrorKind::Unsupported))
        }

        pub fn read(&self) -> std::io::Result<[u64; 3]> {
            Err(std::io::Error::from(std::io::ErrorKind::Unsupported))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(interval_us: u64) -> LiveConfig {
        LiveConfig {
            interval_us,
            duration_s: 1,
            pids: Vec::new(),
        }
    }

    #[test]
    fn absent_capability_is_reported() {
        let cap = CollectorCapability::unavailable("no PMU");
        assert!(matches!(check_request(&cap, &cfg(1000)), Err(Error::Capability { .. })));
    }

    #[test]
    fn interval_below_resolution_is_rejected() {
        let cap = CollectorCapability {
            available: true,
            resolution_us: 3,
            events: EVENTS.iter().map(|e| e.to_string()).collect(),
            reason: None,
        };
        assert!(matches!(check_request(&cap, &cfg(1)), Err(Error::Precondition(_))));
        assert!(check_request(&cap, &cfg(3)).is_ok());
    }

    #[test]
    fn ring_drops_oldest_when_full() {
        let ring = Ring {
            queue: Mutex::new(VecDeque::new()),
            ready: Condvar::new(),
            done: AtomicBool::new(false),
            capacity: 2,
        };
        let stats = LiveStats::default();
        for ts in 0..3 {
            ring.push(
                CpsSample {
                    timestamp_us: ts,
                    pid: 1,
                    process_name: "p".into(),
                    l3_tca: 0,
                    l3_tcm: 0,
                    tot_ins: 0,
                    label: None,
                },
                &stats,
            );
        }
        let q = ring.queue.lock().unwrap();
        assert_eq!(q.iter().map(|s| s.timestamp_us).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(stats.backpressure_drops(), 1);
    }

    #[test]
    fn probe_is_consistent() {
        let cap = CollectorCapability::probe();
        if cap.available {
            assert!(cap.resolution_us > 0);
            assert_eq!(cap.events.len(), 3);
        } else {
            assert!(cap.reason.is_some());
        }
    }
}
