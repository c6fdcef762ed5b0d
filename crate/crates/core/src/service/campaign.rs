//! Assignment pool, response intake and durable event log of one campaign.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{Design, TripletQuestion};
use crate::error::{Error, Result};
use crate::responses::{write_csv, Answer, ResponseRecord};
use crate::stimulus::{PresentationTiming, Protocol, StimulusKey, StimulusStore, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    /// Assignments that may be open or completed at once.
    pub max_assignments: usize,
    /// Target number of workers per batch; `None` spreads `max_assignments`
    /// evenly over the batches.
    pub batch_quota: Option<usize>,
    pub min_batches: usize,
    pub max_batches: usize,
    pub ttl_secs: i64,
    /// Allowance for network delay on top of the protocol response window.
    pub transport_slack_ms: u64,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            max_assignments: 778,
            batch_quota: None,
            min_batches: 1,
            max_batches: 2,
            ttl_secs: 24 * 3600,
            transport_slack_ms: 5000,
            seed: 0,
        }
    }
}

impl CampaignConfig {
    /// Capacities used in the original campaigns.
    pub fn for_protocol(protocol: Protocol) -> Self {
        CampaignConfig {
            max_assignments: match protocol {
                Protocol::Btc => 778,
                Protocol::Ptc => 352,
            },
            ..CampaignConfig::default()
        }
    }

    fn quota(&self, n_batches: usize) -> usize {
        self.batch_quota
            .unwrap_or_else(|| (self.max_assignments * self.max_batches).div_ceil(n_batches.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_batches == 0 || self.min_batches > self.max_batches {
            return Err(Error::invalid(format!(
                "batches per assignment {}..={} is empty",
                self.min_batches, self.max_batches
            )));
        }
        if self.ttl_secs <= 0 {
            return Err(Error::invalid("ttl must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentState {
    Open,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub worker_id: String,
    pub batch_ids: Vec<String>,
    pub question_order: Vec<String>,
    pub opened_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub state: AssignmentState,
    pub answered: usize,
}

/// What a client needs to show the next question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextQuestion {
    pub assignment_id: String,
    pub question_id: String,
    pub position: usize,
    pub total: usize,
    pub protocol: Protocol,
    pub reference_url: String,
    pub left_url: String,
    pub right_url: String,
    pub timing: PresentationTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub question_id: String,
    pub answer: Answer,
    pub response_time_ms: u64,
    #[serde(default)]
    pub toggled_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acknowledgement {
    pub question_id: String,
    pub remaining: usize,
    pub state: AssignmentState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Opened { assignment: Assignment },
    Response { assignment_id: String, record: ResponseRecord },
}

struct OpenAssignment {
    info: Assignment,
    done: BTreeSet<String>,
}

struct State {
    assignments: BTreeMap<String, OpenAssignment>,
    by_worker: HashMap<String, String>,
    /// Assignments ever opened; also the RNG stream counter.
    sequence: u64,
    records: Vec<ResponseRecord>,
    log: Option<File>,
}

/// One campaign over one protocol's design. Safe to share between threads;
/// every mutation is applied and logged under a single lock.
pub struct Campaign {
    design: Design,
    config: CampaignConfig,
    questions: HashMap<String, (usize, usize)>,
    quota: usize,
    state: Mutex<State>,
}

impl Campaign {
    pub fn new(design: Design, config: CampaignConfig) -> Result<Self> {
        config.validate()?;
        if design.batches.is_empty() {
            return Err(Error::invalid("design has no batches"));
        }
        let mut questions = HashMap::new();
        for (b, batch) in design.batches.iter().enumerate() {
            for (i, q) in batch.questions.iter().enumerate() {
                questions.insert(q.question_id.clone(), (b, i));
            }
        }
        let quota = config.quota(design.batches.len());
        Ok(Campaign {
            design,
            config,
            questions,
            quota,
            state: Mutex::new(State {
                assignments: BTreeMap::new(),
                by_worker: HashMap::new(),
                sequence: 0,
                records: Vec::new(),
                log: None,
            }),
        })
    }

    /// Open `path` as the event log, replaying any events it already holds.
    /// A torn final line left by a crash is discarded.
    pub fn with_log(design: Design, config: CampaignConfig, path: &Path) -> Result<Self> {
        let campaign = Campaign::new(design, config)?;
        {
            let mut st = campaign.state.lock().expect("fresh lock");
            if path.exists() {
                let text = std::fs::read(path)?;
                let complete = text.ends_with(b"\n");
                let mut lines: Vec<&[u8]> = text.split(|&b| b == b'\n').filter(|l| !l.is_empty()).collect();
                if !complete && !lines.is_empty() {
                    log::warn!("discarding torn final line of {}", path.display());
                    lines.pop();
                }
                for (n, line) in lines.iter().enumerate() {
                    let event: Event = serde_json::from_slice(line)
                        .map_err(|e| Error::invalid(format!("{} line {}: {e}", path.display(), n + 1)))?;
                    campaign.apply(&mut st, event)?;
                }
                if !complete {
                    let good: usize = lines.iter().map(|l| l.len() + 1).sum();
                    let f = OpenOptions::new().write(true).open(path)?;
                    f.set_len(good as u64)?;
                    f.sync_all()?;
                }
            }
            st.log = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        Ok(campaign)
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn protocol(&self) -> Protocol {
        self.design.protocol
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    fn question(&self, question_id: &str) -> Option<(&TripletQuestion, &str)> {
        self.questions.get(question_id).map(|&(b, i)| {
            let batch = &self.design.batches[b];
            (&batch.questions[i], batch.batch_id.as_str())
        })
    }

    fn apply(&self, st: &mut State, event: Event) -> Result<()> {
        match event {
            Event::Opened { assignment } => {
                st.sequence += 1;
                st.by_worker.insert(assignment.worker_id.clone(), assignment.assignment_id.clone());
                st.assignments.insert(
                    assignment.assignment_id.clone(),
                    OpenAssignment {
                        info: assignment,
                        done: BTreeSet::new(),
                    },
                );
            }
            Event::Response { assignment_id, record } => {
                let a = st
                    .assignments
                    .get_mut(&assignment_id)
                    .ok_or_else(|| Error::invalid(format!("log references unknown assignment {assignment_id}")))?;
                a.done.insert(record.question_id.clone());
                a.info.answered = a.done.len();
                if a.done.len() == a.info.question_order.len() {
                    a.info.state = AssignmentState::Completed;
                }
                st.records.push(record);
            }
        }
        Ok(())
    }

    fn append(st: &mut State, event: &Event) -> Result<()> {
        if let Some(f) = st.log.as_mut() {
            let mut line = serde_json::to_vec(event)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn expire(&self, st: &mut State, now: DateTime<Utc>) {
        for a in st.assignments.values_mut() {
            if a.info.state == AssignmentState::Open && now >= a.info.expires_at {
                a.info.state = AssignmentState::Expired;
            }
        }
    }

    /// Number of live (open or completed) assignments per batch.
    fn usage(&self, st: &State) -> (usize, Vec<usize>) {
        let mut per_batch = vec![0; self.design.batches.len()];
        let mut live = 0;
        for a in st.assignments.values().filter(|a| a.info.state != AssignmentState::Expired) {
            live += 1;
            for id in &a.info.batch_ids {
                if let Some(b) = self.design.batches.iter().position(|b| &b.batch_id == id) {
                    per_batch[b] += 1;
                }
            }
        }
        (live, per_batch)
    }

    /// Give `worker_id` one to two randomly chosen batches with spare quota and
    /// a fresh random question order.
    pub fn open_assignment(&self, worker_id: &str, now: DateTime<Utc>) -> Result<Assignment> {
        if worker_id.trim().is_empty() {
            return Err(Error::invalid("empty worker id"));
        }
        let mut st = self.state.lock().expect("campaign lock poisoned");
        self.expire(&mut st, now);
        if st.by_worker.contains_key(worker_id) {
            return Err(Error::Conflict(format!("worker {worker_id} already holds an assignment")));
        }
        let (live, per_batch) = self.usage(&st);
        if live >= self.config.max_assignments {
            return Err(Error::Unavailable(format!("all {} assignments taken", self.config.max_assignments)));
        }
        let free: Vec<usize> = (0..per_batch.len()).filter(|&b| per_batch[b] < self.quota).collect();
        if free.len() < self.config.min_batches {
            return Err(Error::Unavailable("batch pool exhausted".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(st.sequence + 1);
        let k = rng.random_range(self.config.min_batches..=self.config.max_batches.min(free.len()));
        let mut chosen: Vec<usize> = free.choose_multiple(&mut rng, k).copied().collect();
        chosen.sort_unstable();
        let mut order: Vec<String> = chosen
            .iter()
            .flat_map(|&b| self.design.batches[b].questions.iter().map(|q| q.question_id.clone()))
            .collect();
        order.shuffle(&mut rng);

        let assignment = Assignment {
            assignment_id: format!("{}-a{:05}", self.design.protocol, st.sequence + 1),
            worker_id: worker_id.to_string(),
            batch_ids: chosen.iter().map(|&b| self.design.batches[b].batch_id.clone()).collect(),
            question_order: order,
            opened_at: now,
            expires_at: now + Duration::seconds(self.config.ttl_secs),
            state: AssignmentState::Open,
            answered: 0,
        };
        let event = Event::Opened {
            assignment: assignment.clone(),
        };
        Self::append(&mut st, &event)?;
        self.apply(&mut st, event)?;
        Ok(assignment)
    }

    pub fn assignment(&self, assignment_id: &str, now: DateTime<Utc>) -> Result<Assignment> {
        let mut st = self.state.lock().expect("campaign lock poisoned");
        self.expire(&mut st, now);
        st.assignments
            .get(assignment_id)
            .map(|a| a.info.clone())
            .ok_or_else(|| Error::NotFound(format!("assignment {assignment_id}")))
    }

    /// First unanswered question in the assignment's order, `None` once done.
    pub fn next_question(&self, assignment_id: &str, now: DateTime<Utc>) -> Result<Option<NextQuestion>> {
        let mut st = self.state.lock().expect("campaign lock poisoned");
        self.expire(&mut st, now);
        let a = st
            .assignments
            .get(assignment_id)
            .ok_or_else(|| Error::NotFound(format!("assignment {assignment_id}")))?;
        if a.info.state == AssignmentState::Expired {
            return Err(Error::Expired(assignment_id.to_string()));
        }
        let Some((position, qid)) = a
            .info
            .question_order
            .iter()
            .enumerate()
            .find(|(_, q)| !a.done.contains(*q))
        else {
            return Ok(None);
        };
        let (q, _) = self.question(qid).expect("assigned questions come from the design");
        let reference = if q.protocol.boosted() {
            StimulusStore::zoomed_source_relative(&q.source_id)
        } else {
            StimulusStore::relative_path(&StimulusKey::source(&q.source_id), Variant::Plain)
        };
        Ok(Some(NextQuestion {
            assignment_id: assignment_id.to_string(),
            question_id: qid.clone(),
            position,
            total: a.info.question_order.len(),
            protocol: q.protocol,
            reference_url: stimulus_url(&reference),
            left_url: stimulus_url(&q.left.image_path),
            right_url: stimulus_url(&q.right.image_path),
            timing: q.protocol.timing(),
        }))
    }

    /// Validate and durably record one answer. The first answer to a question
    /// is final.
    pub fn submit_response(&self, assignment_id: &str, sub: &Submission, now: DateTime<Utc>) -> Result<Acknowledgement> {
        let mut st = self.state.lock().expect("campaign lock poisoned");
        self.expire(&mut st, now);
        let a = st
            .assignments
            .get(assignment_id)
            .ok_or_else(|| Error::NotFound(format!("assignment {assignment_id}")))?;
        if a.info.state == AssignmentState::Expired {
            return Err(Error::Expired(assignment_id.to_string()));
        }
        if !a.info.question_order.contains(&sub.question_id) {
            return Err(Error::invalid(format!(
                "question {} is not part of assignment {assignment_id}",
                sub.question_id
            )));
        }
        if a.done.contains(&sub.question_id) {
            return Err(Error::Conflict(format!("question {} already answered", sub.question_id)));
        }
        let (q, batch_id) = self.question(&sub.question_id).expect("assigned questions come from the design");
        let limit = q.protocol.response_window_ms() + self.config.transport_slack_ms;
        if sub.response_time_ms > limit {
            return Err(Error::invalid(format!(
                "response time {} ms exceeds the {limit} ms window",
                sub.response_time_ms
            )));
        }
        let min_toggles = q.protocol.timing().min_toggles;
        if sub.toggled_count < min_toggles {
            return Err(Error::invalid(format!(
                "at least {min_toggles} toggle(s) required, got {}",
                sub.toggled_count
            )));
        }
        let record = ResponseRecord {
            question_id: sub.question_id.clone(),
            worker_id: a.info.worker_id.clone(),
            batch_id: batch_id.to_string(),
            answer: sub.answer,
            response_time_ms: sub.response_time_ms,
            toggled_count: sub.toggled_count,
            submitted_at: now,
        };
        let event = Event::Response {
            assignment_id: assignment_id.to_string(),
            record,
        };
        Self::append(&mut st, &event)?;
        self.apply(&mut st, event)?;
        let a = &st.assignments[assignment_id];
        Ok(Acknowledgement {
            question_id: sub.question_id.clone(),
            remaining: a.info.question_order.len() - a.done.len(),
            state: a.info.state,
        })
    }

    pub fn records(&self) -> Vec<ResponseRecord> {
        self.state.lock().expect("campaign lock poisoned").records.clone()
    }

    /// All stored responses in the export CSV schema.
    pub fn export_csv(&self) -> Result<Vec<u8>> {
        let records = self.records();
        let rows: Vec<_> = records
            .iter()
            .map(|r| r.to_row(self.question(&r.question_id).expect("recorded questions come from the design").0))
            .collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows)?;
        Ok(buf)
    }
}

/// URL under which a store-relative image is served.
pub fn stimulus_url(relative: &Path) -> String {
    let parts: Vec<String> = relative
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    format!("/stimuli/{}", parts.join("/"))
}

/// Default event log location inside an output directory.
pub fn log_path(dir: &Path, protocol: Protocol) -> PathBuf {
    dir.join(format!("{protocol}-events.jsonl"))
}

/// Reads the events back only to count them; used by diagnostics.
pub fn count_events(path: &Path) -> Result<usize> {
    let f = File::open(path)?;
    Ok(BufReader::new(f).lines().filter(|l| l.as_ref().is_ok_and(|l| !l.is_empty())).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{generate_design, DesignConfig};
    use std::sync::Arc;

    fn design(protocol: Protocol) -> Design {
        generate_design(&DesignConfig::paper(), protocol).unwrap()
    }

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-03-01T09:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn answer(c: &Campaign, id: &str, qid: &str, toggles: u32) -> Result<Acknowledgement> {
        c.submit_response(
            id,
            &Submission {
                question_id: qid.into(),
                answer: Answer::Left,
                response_time_ms: 2000,
                toggled_count: toggles,
            },
            t0(),
        )
    }

    #[test]
    fn assignment_is_a_permutation_of_its_batches() {
        let c = Campaign::new(design(Protocol::Ptc), CampaignConfig::for_protocol(Protocol::Ptc)).unwrap();
        let a = c.open_assignment("w1", t0()).unwrap();
        assert!((1..=2).contains(&a.batch_ids.len()));
        let mut expected: Vec<String> = a
            .batch_ids
            .iter()
            .flat_map(|b| c.design().batch(b).unwrap().questions.iter().map(|q| q.question_id.clone()))
            .collect();
        let mut got = a.question_order.clone();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);
        assert!(matches!(c.open_assignment("w1", t0()), Err(Error::Conflict(_))));
    }

    #[test]
    fn capacity_is_enforced() {
        let c = Campaign::new(design(Protocol::Btc), CampaignConfig::for_protocol(Protocol::Btc)).unwrap();
        for i in 0..778 {
            c.open_assignment(&format!("w{i}"), t0()).unwrap();
        }
        assert!(matches!(c.open_assignment("late", t0()), Err(Error::Unavailable(_))));
    }

    #[test]
    fn batch_quota_limits_the_pool() {
        let cfg = CampaignConfig {
            batch_quota: Some(1),
            min_batches: 1,
            max_batches: 1,
            ..CampaignConfig::default()
        };
        let c = Campaign::new(design(Protocol::Ptc), cfg).unwrap();
        for i in 0..10 {
            c.open_assignment(&format!("w{i}"), t0()).unwrap();
        }
        assert!(matches!(c.open_assignment("w10", t0()), Err(Error::Unavailable(_))));
    }

    #[test]
    fn submission_rules() {
        let c = Campaign::new(design(Protocol::Ptc), CampaignConfig::default()).unwrap();
        let a = c.open_assignment("w", t0()).unwrap();
        let q = &a.question_order[0];
        assert!(matches!(answer(&c, &a.assignment_id, q, 0), Err(Error::InvalidInput(_))));
        answer(&c, &a.assignment_id, q, 1).unwrap();
        assert!(matches!(answer(&c, &a.assignment_id, q, 1), Err(Error::Conflict(_))));
        assert!(matches!(answer(&c, &a.assignment_id, "nope", 1), Err(Error::InvalidInput(_))));
        assert!(matches!(answer(&c, "missing", q, 1), Err(Error::NotFound(_))));
        let slow = Submission {
            question_id: a.question_order[1].clone(),
            answer: Answer::Right,
            response_time_ms: 40_000,
            toggled_count: 2,
        };
        assert!(matches!(c.submit_response(&a.assignment_id, &slow, t0()), Err(Error::InvalidInput(_))));
        assert_eq!(c.records().len(), 1);
    }

    #[test]
    fn completion_and_expiry() {
        let c = Campaign::new(design(Protocol::Ptc), CampaignConfig::default()).unwrap();
        let a = c.open_assignment("w", t0()).unwrap();
        for (i, q) in a.question_order.iter().enumerate() {
            let ack = answer(&c, &a.assignment_id, q, 1).unwrap();
            assert_eq!(ack.remaining, a.question_order.len() - i - 1);
        }
        assert_eq!(c.assignment(&a.assignment_id, t0()).unwrap().state, AssignmentState::Completed);
        assert_eq!(c.next_question(&a.assignment_id, t0()).unwrap(), None);

        let b = c.open_assignment("late", t0()).unwrap();
        let later = t0() + Duration::hours(25);
        assert!(matches!(c.next_question(&b.assignment_id, later), Err(Error::Expired(_))));
        // completed assignments never expire
        assert_eq!(c.assignment(&a.assignment_id, later).unwrap().state, AssignmentState::Completed);
    }

    #[test]
    fn next_question_urls() {
        let c = Campaign::new(design(Protocol::Btc), CampaignConfig::default()).unwrap();
        let a = c.open_assignment("w", t0()).unwrap();
        let n = c.next_question(&a.assignment_id, t0()).unwrap().unwrap();
        assert_eq!(n.question_id, a.question_order[0]);
        assert!(n.reference_url.ends_with("/source/0_zoomed_src.png"));
        assert!(n.left_url.starts_with("/stimuli/") && n.left_url.ends_with("_boosted.png"));
        assert_eq!(n.timing.flicker_period_ms, Some(100));
    }

    #[test]
    fn export_of_empty_campaign_is_header_only() {
        let c = Campaign::new(design(Protocol::Ptc), CampaignConfig::default()).unwrap();
        let csv = String::from_utf8(c.export_csv().unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("question_id,worker_id,batch_id,protocol"));
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let cfg = CampaignConfig::default();
        let (aid, q0) = {
            let c = Campaign::with_log(design(Protocol::Ptc), cfg.clone(), &path).unwrap();
            let a = c.open_assignment("w", t0()).unwrap();
            answer(&c, &a.assignment_id, &a.question_order[0], 1).unwrap();
            (a.assignment_id, a.question_order[0].clone())
        };
        // simulate a crash in the middle of a write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"resp").unwrap();
        drop(f);

        let c = Campaign::with_log(design(Protocol::Ptc), cfg, &path).unwrap();
        assert_eq!(c.records().len(), 1);
        assert!(matches!(answer(&c, &aid, &q0, 1), Err(Error::Conflict(_))));
        assert!(matches!(c.open_assignment("w", t0()), Err(Error::Conflict(_))));
        let b = c.open_assignment("w2", t0()).unwrap();
        assert_ne!(b.assignment_id, aid);
        assert_eq!(count_events(&path).unwrap(), 3);
    }

    #[test]
    fn concurrent_duplicates_accept_exactly_one() {
        let c = Arc::new(Campaign::new(design(Protocol::Ptc), CampaignConfig::default()).unwrap());
        let a = c.open_assignment("w", t0()).unwrap();
        let q = a.question_order[0].clone();
        let ok: usize = std::thread::scope(|s| {
            let handles: Vec<_> = (0..16)
                .map(|_| {
                    let (c, id, q) = (Arc::clone(&c), a.assignment_id.clone(), q.clone());
                    s.spawn(move || usize::from(answer(&c, &id, &q, 1).is_ok()))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).sum()
        });
        assert_eq!(ok, 1);
        assert_eq!(c.records().len(), 1);
    }

    #[test]
    fn concurrent_workers_get_distinct_assignments() {
        let cfg = CampaignConfig {
            max_assignments: 40,
            ..CampaignConfig::default()
        };
        let c = Arc::new(Campaign::new(design(Protocol::Ptc), cfg).unwrap());
        let ids: Vec<Result<Assignment>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..64)
                .map(|i| {
                    let c = Arc::clone(&c);
                    s.spawn(move || c.open_assignment(&format!("w{i}"), t0()))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let opened: BTreeSet<String> = ids.iter().filter_map(|r| r.as_ref().ok()).map(|a| a.assignment_id.clone()).collect();
        assert_eq!(opened.len(), 40);
        assert_eq!(ids.iter().filter(|r| matches!(r, Err(Error::Unavailable(_)))).count(), 24);
    }
}
