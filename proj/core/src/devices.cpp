#include "cloaksim/devices.hpp"

namespace cloaksim::soc {

// --- GpioController ------------------------------------------------------

std::uint32_t GpioController::read_reg(std::uint32_t offset) {
    switch (offset) {
        case kDr: return (output_ & gdir_) | (input_ & ~gdir_);
        case kGdir: return gdir_;
        case kIsr: return isr_;
        case kImr: return imr_;
        default: return 0;
    }
}

void GpioController::write_reg(std::uint32_t offset, std::uint32_t value) {
    switch (offset) {
        case kDr: output_ = value; break;
        case kGdir: gdir_ = value; break;
        case kIsr: isr_ &= ~value; break;  // write-1-clear
        case kImr: imr_ = value; break;
        default: break;
    }
}

void GpioController::reset() {
    output_ = gdir_ = isr_ = imr_ = input_ = 0;
}

void GpioController::input_event(std::uint32_t pin, bool level) {
    std::uint32_t bit = 1u << (pin & 31);
    std::uint32_t next = level ? (input_ | bit) : (input_ & ~bit);
    if (next == input_) return;
    input_ = next;
    isr_ |= bit;
    if ((imr_ & bit) && hooks_) hooks_->raise_irq(irq_line_);
}

bool GpioController::pin_level(std::uint32_t pin) const {
    std::uint32_t bit = 1u << (pin & 31);
    return (((output_ & gdir_) | (input_ & ~gdir_)) & bit) != 0;
}

// --- I2cController -------------------------------------------------------

void I2cController::add_slave(std::uint32_t address) {
    slaves_[address & 0x7F] = initial_data(address);
}

std::uint32_t I2cController::read_reg(std::uint32_t offset) {
    switch (offset) {
        case kAddr: return addr_;
        case kData: {
            auto it = slaves_.find(addr_);
            return it == slaves_.end() ? 0 : it->second;
        }
        case kStatus: return status_;
        default: return 0;
    }
}

void I2cController::write_reg(std::uint32_t offset, std::uint32_t value) {
    switch (offset) {
        case kAddr:
            addr_ = value & 0x7F;
            status_ = slaves_.count(addr_) ? 0 : 1;  // NACK on missing slave
            break;
        case kData: {
            auto it = slaves_.find(addr_);
            if (it != slaves_.end()) {
                it->second = static_cast<std::uint8_t>(value);
                status_ = 0;
            } else {
                status_ = 1;
            }
            break;
        }
        default: break;
    }
}

void I2cController::reset() {
    addr_ = 0;
    status_ = 0;
    for (auto& [addr, data] : slaves_) data = initial_data(addr);
}

std::optional<std::uint8_t> I2cController::slave_data(std::uint32_t address) const {
    auto it = slaves_.find(address & 0x7F);
    if (it == slaves_.end()) return std::nullopt;
    return it->second;
}

// --- IpuDevice -------------------------------------------------------------

std::uint32_t IpuDevice::read_reg(std::uint32_t offset) {
    switch (offset) {
        case kFbBase: return fb_base_;
        case kFbFormat: return fb_format_;
        case kEnable: return enable_;
        default: return 0;
    }
}

void IpuDevice::write_reg(std::uint32_t offset, std::uint32_t value) {
    switch (offset) {
        case kFbBase: fb_base_ = value; break;
        case kFbFormat: fb_format_ = value; break;
        case kEnable:
            enable_ = value & 1;
            if (enable_ && hooks_)
                last_scanout_ = hooks_->dma_from_device(node(), Op::Read, fb_base_, scanout_bytes_);
            break;
        default: break;
    }
}

void IpuDevice::reset() {
    fb_base_ = fb_format_ = enable_ = 0;
    last_scanout_ = BusStatus::Ok;
}

// --- RadioController ---------------------------------------------------------

std::uint32_t RadioController::read_reg(std::uint32_t offset) {
    switch (offset) {
        case kCmd: return cmd_;
        case kStatus: return (powered() ? kStatusReady : 0) | (dma_error_ ? kStatusDmaError : 0);
        case kRingBase: return ring_base_;
        default: return 0;
    }
}

void RadioController::write_reg(std::uint32_t offset, std::uint32_t value) {
    switch (offset) {
        case kCmd: cmd_ = value; break;
        case kRingBase: ring_base_ = value; break;
        case kDoorbell: {
            std::uint32_t len = value & 0x00FFFFFFu;
            if (len != 0 && powered() && hooks_) {
                Op dir = (value & kDoorbellDirRead) ? Op::Read : Op::Write;
                dma_error_ = hooks_->dma_from_device(node(), dir, ring_base_, len) != BusStatus::Ok;
            }
            break;
        }
        default: break;
    }
}

void RadioController::reset() {
    cmd_ = 0;
    ring_base_ = 0;
    dma_error_ = false;
}

// --- UartDevice --------------------------------------------------------------

std::uint32_t UartDevice::read_reg(std::uint32_t offset) {
    return offset == kStatus ? 1u : 0u;  // tx always ready
}

void UartDevice::write_reg(std::uint32_t offset, std::uint32_t value) {
    if (offset == kTxData) tx_log_.push_back(static_cast<char>(value & 0xFF));
}

}  // namespace cloaksim::soc
