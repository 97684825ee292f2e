//! Mining creep curves and constitutive models from scientific document
//! bundles into a validated relational database.

pub mod formula;
pub mod curve;
pub mod models;
pub mod digitizer;
pub mod backend;
pub mod corpus;
pub mod skills;
pub mod screening;
pub mod validator;
pub mod store;
pub mod pipeline;
pub mod app;
