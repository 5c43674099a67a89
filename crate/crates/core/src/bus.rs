//! In-process message bus with named topics and named services.
//!
//! Topics are many-to-many and asynchronous: every publish is copied into the
//! bounded queue of each active subscription, dropping the oldest envelope on
//! overflow. Services are one-to-one and synchronous: a call blocks until the
//! handler returns or the timeout elapses.
//!
//! Names go through a remap table before anything is wired. Once the first
//! publisher, subscriber or service exists the table is frozen, so the
//! resolved topology is static for the lifetime of the bus.

use std::any::{Any, TypeId};
use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("invalid name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("cannot remap {from}: the bus is already wired")]
    AlreadyWired { from: String },
    #[error("remap cycle through {0}")]
    RemapCycle(String),
    #[error("queue capacity must be at least 1")]
    InvalidCapacity,
    #[error("stamp regression on {topic}: {got} after {last}")]
    StampRegression { topic: String, last: f64, got: f64 },
    #[error("service {0} is already registered")]
    DuplicateService(String),
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("service {service} expects {expected}")]
    TypeMismatch {
        service: String,
        expected: &'static str,
    },
    #[error("service {service} timed out after {timeout:?}")]
    Timeout { service: String, timeout: Duration },
    #[error("handler of service {0} panicked")]
    HandlerPanicked(String),
}

/// Validated hierarchical name: non-empty, starts with `/`, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TopicName(String);

/// Services share the topic naming rules.
pub type ServiceName = TopicName;

impl TopicName {
    pub fn new(name: impl Into<String>) -> Result<Self, BusError> {
        let name = name.into();
        let reason = if name.is_empty() {
            Some("empty name")
        } else if !name.starts_with('/') {
            Some("must begin with '/'")
        } else if name.chars().any(char::is_whitespace) {
            Some("contains whitespace")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(BusError::InvalidName { name, reason }),
            None => Ok(Self(name)),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// How service calls are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BusMode {
    /// Each call runs its handler on a worker thread; the caller waits with a timeout.
    #[default]
    Threaded,
    /// Calls run inline on the caller's thread. Nothing runs concurrently, so
    /// a simulation driven from service handlers is reproduced exactly.
    Lockstep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope<M> {
    pub topic: TopicName,
    pub publisher: u64,
    pub seq: u64,
    pub stamp: f64,
    pub payload: M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Publishes,
    Subscribes,
    Serves,
    Calls,
}

/// One node-to-name connection in the wired graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Edge {
    pub node: String,
    pub kind: EdgeKind,
    pub name: String,
}

/// Snapshot of the resolved wiring, for introspection dumps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub edges: BTreeSet<Edge>,
}

impl Topology {
    pub fn has(&self, node: &str, kind: EdgeKind, name: &str) -> bool {
        self.edges.contains(&Edge {
            node: node.to_string(),
            kind,
            name: name.to_string(),
        })
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

struct Queue<M> {
    capacity: usize,
    items: Mutex<VecDeque<Envelope<M>>>,
    ready: Condvar,
    active: AtomicBool,
    dropped: AtomicU64,
}

struct Topic<M> {
    name: TopicName,
    subscribers: Mutex<Vec<Arc<Queue<M>>>>,
}

type ErasedHandler = dyn Fn(Box<dyn Any + Send>) -> Box<dyn Any + Send> + Send + Sync;

struct ServiceEntry {
    handler: Arc<ErasedHandler>,
    request: TypeId,
    response: TypeId,
    request_name: &'static str,
}

struct Inner<M> {
    mode: BusMode,
    wired: AtomicBool,
    next_publisher: AtomicU64,
    remaps: Mutex<HashMap<String, String>>,
    topics: Mutex<HashMap<TopicName, Arc<Topic<M>>>>,
    services: Mutex<HashMap<ServiceName, Arc<ServiceEntry>>>,
    topology: Mutex<Topology>,
}

/// Shared handle to one bus instance. Cloning is cheap.
pub struct Bus<M> {
    inner: Arc<Inner<M>>,
}

impl<M> Clone for Bus<M> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

const ANONYMOUS: &str = "anonymous";

impl<M: Clone + Send + 'static> Default for Bus<M> {
    fn default() -> Self {
        Self::new(BusMode::default())
    }
}

impl<M: Clone + Send + 'static> Bus<M> {
    pub fn new(mode: BusMode) -> Self {
        Self {
            inner: Arc::new(Inner {
                mode,
                wired: AtomicBool::new(false),
                next_publisher: AtomicU64::new(1),
                remaps: Mutex::new(HashMap::new()),
                topics: Mutex::new(HashMap::new()),
                services: Mutex::new(HashMap::new()),
                topology: Mutex::new(Topology::default()),
            }),
        }
    }

    pub fn mode(&self) -> BusMode {
        self.inner.mode
    }

    /// Handle that tags every connection with `name` in the topology dump.
    pub fn node(&self, name: &str) -> NodeHandle<M> {
        NodeHandle {
            bus: self.clone(),
            name: name.to_string(),
        }
    }

    /// Route every later use of `from` to `to`. Must happen before wiring.
    pub fn remap(&self, from: &str, to: &str) -> Result<(), BusError> {
        let from = TopicName::new(from)?;
        let to = TopicName::new(to)?;
        if self.inner.wired.load(Ordering::SeqCst) {
            return Err(BusError::AlreadyWired {
                from: from.to_string(),
            });
        }
        if from == to {
            return Ok(());
        }
        let mut remaps = lock(&self.inner.remaps);
        let previous = remaps.insert(from.0.clone(), to.0);
        if let Err(e) = resolve_in(&remaps, from.as_str()) {
            match previous {
                Some(p) => remaps.insert(from.0, p),
                None => remaps.remove(&from.0),
            };
            return Err(e);
        }
        Ok(())
    }

    /// Resolve a name through the remap table, following chains.
    pub fn resolve(&self, name: &str) -> Result<TopicName, BusError> {
        let name = TopicName::new(name)?;
        let remaps = lock(&self.inner.remaps);
        resolve_in(&remaps, name.as_str())
    }

    fn wire(&self, name: &str) -> Result<TopicName, BusError> {
        // Taking the remap lock orders this against a concurrent remap().
        let remaps = lock(&self.inner.remaps);
        self.inner.wired.store(true, Ordering::SeqCst);
        let name = TopicName::new(name)?;
        resolve_in(&remaps, name.as_str())
    }

    fn record(&self, node: &str, kind: EdgeKind, name: &TopicName) {
        lock(&self.inner.topology).edges.insert(Edge {
            node: node.to_string(),
            kind,
            name: name.to_string(),
        });
    }

    pub fn topology(&self) -> Topology {
        lock(&self.inner.topology).clone()
    }

    fn topic(&self, name: TopicName) -> Arc<Topic<M>> {
        let mut topics = lock(&self.inner.topics);
        Arc::clone(topics.entry(name.clone()).or_insert_with(|| {
            Arc::new(Topic {
                name,
                subscribers: Mutex::new(Vec::new()),
            })
        }))
    }

    pub fn advertise(&self, topic: &str) -> Result<Publisher<M>, BusError> {
        self.advertise_as(ANONYMOUS, topic)
    }

    fn advertise_as(&self, node: &str, topic: &str) -> Result<Publisher<M>, BusError> {
        let name = self.wire(topic)?;
        self.record(node, EdgeKind::Publishes, &name);
        Ok(Publisher {
            topic: self.topic(name),
            id: self.inner.next_publisher.fetch_add(1, Ordering::Relaxed),
            seq: 0,
            last_stamp: f64::NEG_INFINITY,
        })
    }

    pub fn subscribe(&self, topic: &str, capacity: usize) -> Result<Subscription<M>, BusError> {
        self.subscribe_as(ANONYMOUS, topic, capacity)
    }

    fn subscribe_as(
        &self,
        node: &str,
        topic: &str,
        capacity: usize,
    ) -> Result<Subscription<M>, BusError> {
        if capacity == 0 {
            return Err(BusError::InvalidCapacity);
        }
        let name = self.wire(topic)?;
        self.record(node, EdgeKind::Subscribes, &name);
        let topic = self.topic(name);
        let queue = Arc::new(Queue {
            capacity,
            items: Mutex::new(VecDeque::with_capacity(capacity.min(1024))),
            ready: Condvar::new(),
            active: AtomicBool::new(true),
            dropped: AtomicU64::new(0),
        });
        lock(&topic.subscribers).push(Arc::clone(&queue));
        Ok(Subscription { topic, queue })
    }

    pub fn register_service<Req, Resp, F>(
        &self,
        name: &str,
        handler: F,
    ) -> Result<ServiceHandle<M>, BusError>
    where
        Req: Send + 'static,
        Resp: Send + 'static,
        F: Fn(Req) -> Resp + Send + Sync + 'static,
    {
        self.register_service_as(ANONYMOUS, name, handler)
    }

    fn register_service_as<Req, Resp, F>(
        &self,
        node: &str,
        name: &str,
        handler: F,
    ) -> Result<ServiceHandle<M>, BusError>
    where
        Req: Send + 'static,
        Resp: Send + 'static,
        F: Fn(Req) -> Resp + Send + Sync + 'static,
    {
        let name = self.wire(name)?;
        let mut services = lock(&self.inner.services);
        if services.contains_key(&name) {
            return Err(BusError::DuplicateService(name.0));
        }
        let erased: Arc<ErasedHandler> = Arc::new(move |req: Box<dyn Any + Send>| {
            let req = *req
                .downcast::<Req>()
                .expect("request type checked before dispatch");
            Box::new(handler(req)) as Box<dyn Any + Send>
        });
        services.insert(
            name.clone(),
            Arc::new(ServiceEntry {
                handler: erased,
                request: TypeId::of::<Req>(),
                response: TypeId::of::<Resp>(),
                request_name: std::any::type_name::<Req>(),
            }),
        );
        drop(services);
        self.record(node, EdgeKind::Serves, &name);
        Ok(ServiceHandle {
            bus: self.clone(),
            name,
        })
    }

    /// Call a service, blocking until it answers or `timeout` elapses.
    ///
    /// A timed-out call never yields a response: whatever the handler returns
    /// afterwards is discarded.
    pub fn call_service<Req, Resp>(
        &self,
        name: &str,
        request: Req,
        timeout: Duration,
    ) -> Result<Resp, BusError>
    where
        Req: Send + 'static,
        Resp: Send + 'static,
    {
        let name = self.resolve(name)?;
        let entry = lock(&self.inner.services)
            .get(&name)
            .cloned()
            .ok_or_else(|| BusError::UnknownService(name.0.clone()))?;
        if entry.request != TypeId::of::<Req>() || entry.response != TypeId::of::<Resp>() {
            return Err(BusError::TypeMismatch {
                service: name.0,
                expected: entry.request_name,
            });
        }
        let response = match self.inner.mode {
            BusMode::Threaded => {
                let (tx, rx) = mpsc::sync_channel(1);
                let handler = Arc::clone(&entry.handler);
                thread::Builder::new()
                    .name(format!("svc{}", name))
                    .spawn(move || {
                        let out = handler(Box::new(request));
                        // the caller may have given up already
                        let _ = tx.send(out);
                    })
                    .expect("spawn service worker");
                match rx.recv_timeout(timeout) {
                    Ok(out) => out,
                    Err(mpsc::RecvTimeoutError::Timeout) => {
                        return Err(BusError::Timeout {
                            service: name.0,
                            timeout,
                        })
                    }
                    Err(mpsc::RecvTimeoutError::Disconnected) => {
                        return Err(BusError::HandlerPanicked(name.0))
                    }
                }
            }
            BusMode::Lockstep => {
                let started = Instant::now();
                let out = catch_unwind(AssertUnwindSafe(|| (entry.handler)(Box::new(request))))
                    .map_err(|_| BusError::HandlerPanicked(name.0.clone()))?;
                if started.elapsed() > timeout {
                    return Err(BusError::Timeout {
                        service: name.0,
                        timeout,
                    });
                }
                out
            }
        };
        Ok(*response
            .downcast::<Resp>()
            .expect("response type checked before dispatch"))
    }

    pub fn has_service(&self, name: &str) -> bool {
        self.resolve(name)
            .map(|n| lock(&self.inner.services).contains_key(&n))
            .unwrap_or(false)
    }
}

fn resolve_in(remaps: &HashMap<String, String>, name: &str) -> Result<TopicName, BusError> {
    let mut current = name.to_string();
    let mut seen = HashSet::new();
    while let Some(next) = remaps.get(&current) {
        if !seen.insert(current.clone()) {
            return Err(BusError::RemapCycle(name.to_string()));
        }
        current = next.clone();
    }
    Ok(TopicName(current))
}

/// Bus handle scoped to one named node.
pub struct NodeHandle<M> {
    bus: Bus<M>,
    name: String,
}

impl<M: Clone + Send + 'static> NodeHandle<M> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bus(&self) -> &Bus<M> {
        &self.bus
    }

    pub fn advertise(&self, topic: &str) -> Result<Publisher<M>, BusError> {
        self.bus.advertise_as(&self.name, topic)
    }

    pub fn subscribe(&self, topic: &str, capacity: usize) -> Result<Subscription<M>, BusError> {
        self.bus.subscribe_as(&self.name, topic, capacity)
    }

    pub fn register_service<Req, Resp, F>(
        &self,
        name: &str,
        handler: F,
    ) -> Result<ServiceHandle<M>, BusError>
    where
        Req: Send + 'static,
        Resp: Send + 'static,
        F: Fn(Req) -> Resp + Send + Sync + 'static,
    {
        self.bus.register_service_as(&self.name, name, handler)
    }

    /// Declare this node as a client of `name` and return a reusable caller.
    pub fn service_client(&self, name: &str) -> Result<ServiceClient<M>, BusError> {
        let resolved = self.bus.wire(name)?;
        self.bus.record(&self.name, EdgeKind::Calls, &resolved);
        Ok(ServiceClient {
            bus: self.bus.clone(),
            name: resolved,
        })
    }
}

pub struct ServiceClient<M> {
    bus: Bus<M>,
    name: ServiceName,
}

impl<M: Clone + Send + 'static> ServiceClient<M> {
    pub fn call<Req, Resp>(&self, request: Req, timeout: Duration) -> Result<Resp, BusError>
    where
        Req: Send + 'static,
        Resp: Send + 'static,
    {
        self.bus.call_service(self.name.as_str(), request, timeout)
    }

    pub fn name(&self) -> &ServiceName {
        &self.name
    }
}

pub struct ServiceHandle<M> {
    bus: Bus<M>,
    name: ServiceName,
}

impl<M> ServiceHandle<M> {
    pub fn name(&self) -> &ServiceName {
        &self.name
    }

    pub fn unregister(self) {
        lock(&self.bus.inner.services).remove(&self.name);
    }
}

pub struct Publisher<M> {
    topic: Arc<Topic<M>>,
    id: u64,
    seq: u64,
    last_stamp: f64,
}

impl<M: Clone> Publisher<M> {
    pub fn topic(&self) -> &TopicName {
        &self.topic.name
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Deliver to every active subscription. Returns the envelope's sequence number.
    pub fn publish(&mut self, stamp: f64, payload: M) -> Result<u64, BusError> {
        if stamp < self.last_stamp {
            return Err(BusError::StampRegression {
                topic: self.topic.name.to_string(),
                last: self.last_stamp,
                got: stamp,
            });
        }
        self.last_stamp = stamp;
        self.seq += 1;
        let subscribers = lock(&self.topic.subscribers);
        for queue in subscribers.iter() {
            if !queue.active.load(Ordering::Acquire) {
                continue;
            }
            let envelope = Envelope {
                topic: self.topic.name.clone(),
                publisher: self.id,
                seq: self.seq,
                stamp,
                payload: payload.clone(),
            };
            let mut items = lock(&queue.items);
            if items.len() == queue.capacity {
                items.pop_front();
                queue.dropped.fetch_add(1, Ordering::Relaxed);
            }
            items.push_back(envelope);
            queue.ready.notify_all();
        }
        Ok(self.seq)
    }

    /// True when at least one subscription is currently accepting envelopes.
    pub fn has_active_subscribers(&self) -> bool {
        lock(&self.topic.subscribers)
            .iter()
            .any(|q| q.active.load(Ordering::Acquire))
    }
}

pub struct Subscription<M> {
    topic: Arc<Topic<M>>,
    queue: Arc<Queue<M>>,
}

impl<M> Subscription<M> {
    pub fn topic(&self) -> &TopicName {
        &self.topic.name
    }

    pub fn try_recv(&self) -> Option<Envelope<M>> {
        lock(&self.queue.items).pop_front()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope<M>> {
        let deadline = Instant::now() + timeout;
        let mut items = lock(&self.queue.items);
        loop {
            if let Some(e) = items.pop_front() {
                return Some(e);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            items = self
                .queue
                .ready
                .wait_timeout(items, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn drain(&self) -> Vec<Envelope<M>> {
        lock(&self.queue.items).drain(..).collect()
    }

    /// Drain the queue and keep only the newest envelope.
    pub fn latest(&self) -> Option<Envelope<M>> {
        let mut items = lock(&self.queue.items);
        let last = items.pop_back();
        items.clear();
        last
    }

    pub fn len(&self) -> usize {
        lock(&self.queue.items).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Envelopes discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.queue.dropped.load(Ordering::Relaxed)
    }

    /// Stop accepting envelopes. Publishers that check for active subscribers
    /// (the camera, for one) may skip work while nobody listens.
    pub fn pause(&self) {
        self.queue.active.store(false, Ordering::Release);
    }

    pub fn resume(&self) {
        self.queue.active.store(true, Ordering::Release);
    }

    pub fn is_active(&self) -> bool {
        self.queue.active.load(Ordering::Acquire)
    }
}

impl<M> Drop for Subscription<M> {
    fn drop(&mut self) {
        lock(&self.topic.subscribers).retain(|q| !Arc::ptr_eq(q, &self.queue));
    }
}
