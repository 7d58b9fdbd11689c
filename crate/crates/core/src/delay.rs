//! Bounded FIFO communication delays and stamped message buffers.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `d = 2q + 1`.
pub fn d_from_q(q: usize) -> usize {
    2 * q + 1
}

/// `(t - d)^+`.
pub fn stamp_for_read(t: usize, d: usize) -> usize {
    t.saturating_sub(d)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayMode {
    /// Independent uniform draws from `{0..q}`.
    Uniform,
    /// Every message waits exactly `q` steps.
    Constant,
    /// Fixed delay per directed link `(sender, receiver)`; unlisted links use 0.
    Table(HashMap<(usize, usize), usize>),
}

impl DelayMode {
    pub fn name(&self) -> &'static str {
        match self {
            DelayMode::Uniform => "uniform",
            DelayMode::Constant => "constant",
            DelayMode::Table(_) => "table",
        }
    }
}

/// Which of the two message families a link carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Alpha,
    Omega,
}

/// Replayable delay law: a pure function of `(channel, sender, receiver, stamp, seed)`.
#[derive(Debug, Clone)]
pub struct DelaySchedule {
    pub q: usize,
    pub mode: DelayMode,
    pub seed: u64,
    agents: usize,
}

impl DelaySchedule {
    pub fn new(q: usize, mode: DelayMode, seed: u64, agents: usize) -> Result<Self> {
        if let DelayMode::Table(table) = &mode {
            for (&(u, v), &delay) in table {
                if u >= agents || v >= agents {
                    return Err(Error::Validation(format!(
                        "delay table link ({u}, {v}) outside 0..{agents}"
                    )));
                }
                if delay > q {
                    return Err(Error::Validation(format!(
                        "delay table entry {delay} on link ({u}, {v}) exceeds q = {q}"
                    )));
                }
            }
        }
        Ok(Self {
            q,
            mode,
            seed,
            agents,
        })
    }

    pub fn d(&self) -> usize {
        d_from_q(self.q)
    }

    pub fn delay(&self, channel: Channel, sender: usize, receiver: usize, stamp: usize) -> usize {
        match &self.mode {
            DelayMode::Constant => self.q,
            DelayMode::Table(t) => t.get(&(sender, receiver)).copied().unwrap_or(0),
            DelayMode::Uniform => {
                if self.q == 0 {
                    return 0;
                }
                let kind = match channel {
                    Channel::Alpha => 0,
                    Channel::Omega => 1,
                };
                let link = ((kind * self.agents + sender) * self.agents + receiver) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(link);
                rng.set_word_pos(stamp as u128 * 16);
                rng.random_range(0..=self.q)
            }
        }
    }
}

/// Stamped entries of one variable as seen by one reader.
#[derive(Debug, Clone)]
pub struct StampedBuffer<T> {
    entries: VecDeque<(usize, usize, T)>,
    retain: usize,
}

impl<T: Clone> StampedBuffer<T> {
    /// Buffer holding at least `retain` stamps, seeded with `initial` at stamp 0, arrival 0.
    pub fn new(initial: T, retain: usize) -> Self {
        let mut entries = VecDeque::with_capacity(retain + 1);
        entries.push_back((0, 0, initial));
        Self {
            entries,
            retain: retain.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_stamp(&self) -> Option<usize> {
        self.entries.back().map(|e| e.0)
    }

    pub fn last_arrival(&self) -> usize {
        self.entries.back().map(|e| e.1).unwrap_or(0)
    }

    /// Appends a message; stamps must strictly increase and arrivals must not decrease.
    pub fn push(&mut self, stamp: usize, arrival: usize, value: T) -> Result<()> {
        if let Some(&(s, a, _)) = self.entries.back() {
            if stamp <= s {
                return Err(Error::Availability(format!(
                    "stamp {stamp} pushed after stamp {s}"
                )));
            }
            if arrival < a {
                return Err(Error::Availability(format!(
                    "FIFO violation: stamp {stamp} arrives at {arrival} before stamp {s} at {a}"
                )));
            }
        }
        if arrival < stamp {
            return Err(Error::Availability(format!(
                "stamp {stamp} arrives at {arrival}, before it was produced"
            )));
        }
        self.entries.push_back((stamp, arrival, value));
        while self.entries.len() > self.retain {
            self.entries.pop_front();
        }
        Ok(())
    }

    /// Value stamped exactly `stamp`, provided it has arrived by `now`.
    pub fn read_at(&self, stamp: usize, now: usize) -> Result<&T> {
        let (front, _, _) = self.entries.front().expect("buffer never empty");
        if stamp < *front {
            return Err(Error::Availability(format!(
                "stamp {stamp} already evicted (oldest {front})"
            )));
        }
        let idx = stamp - front;
        match self.entries.get(idx) {
            Some((s, arrival, v)) if *s == stamp => {
                if *arrival <= now {
                    Ok(v)
                } else {
                    Err(Error::Availability(format!(
                        "stamp {stamp} arrives at {arrival}, read at {now}"
                    )))
                }
            }
            _ => match self.entries.iter().find(|e| e.0 == stamp) {
                Some((_, arrival, v)) if *arrival <= now => Ok(v),
                Some((_, arrival, _)) => Err(Error::Availability(format!(
                    "stamp {stamp} arrives at {arrival}, read at {now}"
                ))),
                None => Err(Error::Availability(format!("stamp {stamp} never sent"))),
            },
        }
    }

    /// Newest value that has arrived by `now`, with its stamp.
    pub fn read_freshest(&self, now: usize) -> Result<(usize, &T)> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.1 <= now)
            .map(|e| (e.0, &e.2))
            .ok_or_else(|| Error::Availability(format!("nothing arrived by {now}")))
    }
}

/// A directed link with its delivery buffer.
#[derive(Debug, Clone)]
pub struct Link<T> {
    pub channel: Channel,
    pub sender: usize,
    pub receiver: usize,
    pub buffer: StampedBuffer<T>,
    /// Number of messages whose arrival was pushed back to keep FIFO order.
    pub fifo_repairs: usize,
}

impl<T: Clone> Link<T> {
    pub fn new(channel: Channel, sender: usize, receiver: usize, initial: T, retain: usize) -> Self {
        Self {
            channel,
            sender,
            receiver,
            buffer: StampedBuffer::new(initial, retain),
            fifo_repairs: 0,
        }
    }

    /// Sends a message produced at time `sent`; returns its (FIFO-repaired) arrival.
    pub fn deliver(&mut self, schedule: &DelaySchedule, stamp: usize, sent: usize, value: T) -> Result<usize> {
        let delay = schedule.delay(self.channel, self.sender, self.receiver, stamp);
        if delay > schedule.q {
            return Err(Error::Validation(format!(
                "scheduled delay {delay} exceeds q = {}",
                schedule.q
            )));
        }
        let own = sent + delay;
        let arrival = own.max(self.buffer.last_arrival());
        if arrival > own {
            self.fifo_repairs += 1;
        }
        self.buffer.push(stamp, arrival, value)?;
        Ok(arrival)
    }
}
