pub use mixchart;
