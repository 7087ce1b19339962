pub mod active_set;
