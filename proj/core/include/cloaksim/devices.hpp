// Minimal behavioral peripheral models. Register side effects are
// deterministic functions of (register file, access).
#pragma once

#include <map>
#include <string>

#include "cloaksim/soc.hpp"

namespace cloaksim::soc {

/// 32-pin GPIO controller acting as a chained interrupt controller.
/// 0x00 DR (pin data), 0x04 GDIR (direction), 0x18 ISR (write-1-clear),
/// 0x1C IMR.
class GpioController : public Device {
public:
    static constexpr std::uint32_t kDr = 0x00, kGdir = 0x04, kIsr = 0x18, kImr = 0x1C;

    GpioController(NodeId node, std::string name, RegRange mmio, std::uint32_t irq_line)
        : Device(node, std::move(name), mmio), irq_line_(irq_line) {}

    std::uint32_t read_reg(std::uint32_t offset) override;
    void write_reg(std::uint32_t offset, std::uint32_t value) override;
    void reset() override;

    /// External pin stimulus; latches the ISR bit on any level change and
    /// raises the chained interrupt when unmasked.
    void input_event(std::uint32_t pin, bool level);

    bool pin_level(std::uint32_t pin) const;
    std::uint32_t irq_line() const { return irq_line_; }
    std::uint32_t isr() const { return isr_; }
    std::uint32_t output_latch() const { return output_; }

private:
    std::uint32_t irq_line_;
    std::uint32_t output_ = 0;
    std::uint32_t gdir_ = 0;
    std::uint32_t isr_ = 0;
    std::uint32_t imr_ = 0;
    std::uint32_t input_ = 0;
};

/// I2C controller with tree-declared 7-bit slaves, each holding one data
/// byte. 0x00 ADDR, 0x04 DATA, 0x08 STATUS (bit0 = error/NACK).
class I2cController : public Device {
public:
    static constexpr std::uint32_t kAddr = 0x00, kData = 0x04, kStatus = 0x08;

    I2cController(NodeId node, std::string name, RegRange mmio) : Device(node, std::move(name), mmio) {}

    void add_slave(std::uint32_t address);

    std::uint32_t read_reg(std::uint32_t offset) override;
    void write_reg(std::uint32_t offset, std::uint32_t value) override;
    void reset() override;

    std::optional<std::uint8_t> slave_data(std::uint32_t address) const;
    std::uint32_t selected() const { return addr_; }

private:
    static std::uint8_t initial_data(std::uint32_t address) {
        return static_cast<std::uint8_t>(address ^ 0x5A);
    }
    std::uint32_t addr_ = 0;
    std::uint32_t status_ = 0;
    std::map<std::uint32_t, std::uint8_t> slaves_;
};

/// Display unit; a DMA master that scans the framebuffer out of RAM.
/// 0x00 FB_BASE, 0x04 FB_FORMAT (1 = RGB24), 0x08 ENABLE. Writing 1 to
/// ENABLE performs one scanout pass.
class IpuDevice : public Device {
public:
    static constexpr std::uint32_t kFbBase = 0x00, kFbFormat = 0x04, kEnable = 0x08;
    static constexpr std::uint32_t kFormatRgb24 = 1;

    IpuDevice(NodeId node, std::string name, RegRange mmio, std::uint32_t scanout_bytes)
        : Device(node, std::move(name), mmio), scanout_bytes_(scanout_bytes) {}

    std::uint32_t read_reg(std::uint32_t offset) override;
    void write_reg(std::uint32_t offset, std::uint32_t value) override;
    void reset() override;

    std::uint32_t fb_base() const { return fb_base_; }
    std::uint32_t fb_format() const { return fb_format_; }
    bool enabled() const { return enable_ != 0; }
    BusStatus last_scanout() const { return last_scanout_; }

private:
    std::uint32_t scanout_bytes_;
    std::uint32_t fb_base_ = 0;
    std::uint32_t fb_format_ = 0;
    std::uint32_t enable_ = 0;
    BusStatus last_scanout_ = BusStatus::Ok;
};

/// Bulk-transfer radio (WiFi and friends); a DMA master driven through a
/// doorbell. 0x00 CMD (bit0 power), 0x04 STATUS (bit0 ready, bit1 DMA
/// error), 0x08 DMA_RING_BASE, 0x0C DMA_DOORBELL. A doorbell write moves
/// (value & 0xFFFFFF) bytes at the ring base; bit31 selects device-read
/// (upload) over device-write (download).
class RadioController : public Device {
public:
    static constexpr std::uint32_t kCmd = 0x00, kStatus = 0x04, kRingBase = 0x08, kDoorbell = 0x0C;
    static constexpr std::uint32_t kDoorbellDirRead = 1u << 31;
    static constexpr std::uint32_t kStatusReady = 1u << 0;
    static constexpr std::uint32_t kStatusDmaError = 1u << 1;

    RadioController(NodeId node, std::string name, RegRange mmio) : Device(node, std::move(name), mmio) {}

    std::uint32_t read_reg(std::uint32_t offset) override;
    void write_reg(std::uint32_t offset, std::uint32_t value) override;
    void reset() override;

    bool powered() const { return (cmd_ & 1) != 0; }
    std::uint32_t ring_base() const { return ring_base_; }

private:
    std::uint32_t cmd_ = 0;
    std::uint32_t ring_base_ = 0;
    bool dma_error_ = false;
};

/// 0x00 TXDATA (write appends to the log), 0x04 STATUS (bit0 tx ready).
class UartDevice : public Device {
public:
    static constexpr std::uint32_t kTxData = 0x00, kStatus = 0x04;

    UartDevice(NodeId node, std::string name, RegRange mmio) : Device(node, std::move(name), mmio) {}

    std::uint32_t read_reg(std::uint32_t offset) override;
    void write_reg(std::uint32_t offset, std::uint32_t value) override;
    void reset() override { tx_log_.clear(); }

    const std::string& tx_log() const { return tx_log_; }

private:
    std::string tx_log_;
};

/// Hardwired secure-only block (CSU, GIC). The real programming interface
/// is the SoC API; the MMIO window exists so stray NS pokes fault.
class SecureStub : public Device {
public:
    SecureStub(NodeId node, std::string name, RegRange mmio) : Device(node, std::move(name), mmio) {}
    bool secure_only() const override { return true; }
    std::uint32_t read_reg(std::uint32_t) override { return 0; }
    void write_reg(std::uint32_t, std::uint32_t) override {}
    void reset() override {}
};

}  // namespace cloaksim::soc
