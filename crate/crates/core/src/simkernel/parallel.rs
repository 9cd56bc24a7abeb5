//! 8-bit parallel bus with a four-phase strobe/ack handshake.
//!
//! A transfer runs: writer puts data and raises strobe, reader samples data
//! and raises ack, writer drops strobe, reader drops ack. The transfer is
//! complete only when ack falls.

use super::KernelError;

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ParallelBus {
    data: u8,
    strobe: bool,
    ack: bool,
    completed: u64,
}

impl ParallelBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn strobe(&self) -> bool {
        self.strobe
    }

    pub fn ack(&self) -> bool {
        self.ack
    }

    /// Number of completed byte transfers.
    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Writer side: present `b` and raise strobe.
    pub fn write(&mut self, b: u8) -> Result<(), KernelError> {
        if self.ack || self.strobe {
            return Err(KernelError::ParallelBusy);
        }
        self.data = b;
        self.strobe = true;
        Ok(())
    }

    /// Reader side: sample data and raise ack.
    pub fn read(&mut self) -> Result<u8, KernelError> {
        if !self.strobe {
            return Err(KernelError::ParallelNotReady);
        }
        if self.ack {
            return Err(KernelError::ParallelProtocol("data already acknowledged"));
        }
        self.ack = true;
        Ok(self.data)
    }

    /// Writer side: drop strobe once the reader has acknowledged.
    pub fn release_strobe(&mut self) -> Result<(), KernelError> {
        if !self.strobe || !self.ack {
            return Err(KernelError::ParallelProtocol("strobe released before ack"));
        }
        self.strobe = false;
        Ok(())
    }

    /// Reader side: drop ack, completing the transfer.
    pub fn release_ack(&mut self) -> Result<(), KernelError> {
        if self.strobe || !self.ack {
            return Err(KernelError::ParallelProtocol("ack released while strobe high"));
        }
        self.ack = false;
        self.completed += 1;
        Ok(())
    }

    /// Runs all four phases for one byte and returns what the reader saw.
    pub fn transfer(&mut self, b: u8) -> Result<u8, KernelError> {
        self.write(b)?;
        let seen = self.read()?;
        self.release_strobe()?;
        self.release_ack()?;
        Ok(seen)
    }
}
