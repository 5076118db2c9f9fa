//! Node labels, edge labels and property keys shared by every model layer.

// node labels
pub const STATE: &str = "State";
pub const STATE_TRANS: &str = "StateTrans";
pub const VARIABLE: &str = "Variable";
pub const EVENT: &str = "Event";
pub const ROOT: &str = "Root";
pub const NTERM: &str = "NTerm";
pub const TERM: &str = "Term";

// edge labels
pub const NEXT: &str = "next";
pub const CHILD: &str = "child";
pub const PARSES: &str = "parses";
pub const CAUSES: &str = "causes";
pub const ABSTRACTS: &str = "abstracts";
pub const TRANS: &str = "trans";
pub const TO: &str = "to";
pub const ACCEPTS: &str = "accepts";
pub const HAS: &str = "has";
pub const PROPAG: &str = "propag";
pub const SOURCE: &str = "source";
pub const SINK: &str = "sink";

// property keys
pub const P_TYPE: &str = "t";
pub const P_SESSION: &str = "session";
pub const P_USER: &str = "user";
pub const P_INDEX: &str = "index";
pub const P_PHASE: &str = "phase";
pub const P_REQUEST_ID: &str = "request_id";
pub const P_SYMBOL: &str = "sym";
pub const P_ROLE: &str = "role";
pub const P_FINGERPRINT: &str = "fp";
pub const P_MUTATES: &str = "mutates";
pub const P_CLUSTER: &str = "cluster_id";
pub const P_ORDINAL: &str = "ordinal";
pub const P_ALIASES: &str = "aliases";
pub const P_NAME: &str = "name";
pub const P_VALUE: &str = "value";
pub const P_TIER: &str = "tier";
pub const P_TREE: &str = "tree";
pub const P_GROUP: &str = "group";
pub const P_SYN_TYPE: &str = "syn_type";
pub const P_SEM_TYPE: &str = "sem_type";
pub const P_UG: &str = "ug";
pub const P_IDX: &str = "idx";

// values of the `t` property
pub const T_UA: &str = "UA";
pub const T_HTTP: &str = "HTTPReq";
pub const T_SQL: &str = "SQL";
pub const T_ABS_HTTP: &str = "AbsHTTPReq";
pub const T_ABS_SQL: &str = "AbsSQL";

pub const PHASE_LOGIN: &str = "login";
pub const PHASE_WORKFLOW: &str = "workflow";
