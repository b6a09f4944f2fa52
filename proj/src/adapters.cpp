#include <chrono>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "collabiot/proxy.hpp"
#include "collabiot/token.hpp"

// Emulated device adapters. Each translates the hardware-independent API
// surface into local state changes plus a configurable service delay, which
// stands in for the physical device or inference runtime.

namespace collabiot::proxy {

namespace {

void sleep_ms(double ms) {
    if (ms <= 0) return;
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

std::string opaque_blob(std::size_t bytes, std::uint32_t seed) {
    std::string raw(bytes, '\0');
    std::mt19937 rng(seed);
    for (auto& c : raw) c = static_cast<char>(rng() & 0xff);
    return token::base64url_encode(reinterpret_cast<const unsigned char*>(raw.data()), raw.size());
}

class BulbAdapter : public DeviceAdapter {
public:
    explicit BulbAdapter(AdapterConfig cfg) : cfg_(cfg) {}

    std::string device_type() const override { return "bulb"; }

    std::vector<std::string> methods() const override {
        return {"turn_on", "turn_off", "set_brightness", "get_status"};
    }

    std::optional<model::CapabilityName> capability_of(const std::string& m) const override {
        if (m == "turn_on" || m == "turn_off") return model::CapabilityName{"bulb_switch"};
        if (m == "set_brightness") return model::CapabilityName{"bulb_brightness"};
        if (m == "get_status") return model::CapabilityName{"bulb_getstatus"};
        return std::nullopt;
    }

    Json execute(const std::string& method, const Json& args) override {
        if (method == "get_status") {
            sleep_ms(cfg_.status_time_ms);
            std::lock_guard lock(mutex_);
            return Json{{"on", on_}, {"brightness", brightness_}};
        }
        sleep_ms(cfg_.service_time_ms);
        std::lock_guard lock(mutex_);
        if (method == "turn_on") {
            on_ = true;
        } else if (method == "turn_off") {
            on_ = false;
        } else if (method == "set_brightness") {
            const int level = args.value("level", 100);
            if (level < 0 || level > 100) throw Error(Errc::adapter, "brightness out of range");
            brightness_ = level;
        } else {
            throw Error(Errc::adapter, "unknown method '" + method + "'");
        }
        return Json{{"on", on_}, {"brightness", brightness_}};
    }

    int parallelism() const override { return cfg_.parallelism; }

private:
    AdapterConfig cfg_;
    std::mutex mutex_;
    bool on_ = false;
    int brightness_ = 100;
};

class LockAdapter : public DeviceAdapter {
public:
    explicit LockAdapter(AdapterConfig cfg) : cfg_(cfg) {}

    std::string device_type() const override { return "lock"; }

    std::vector<std::string> methods() const override {
        return {"lock", "unlock", "set_conf", "get_status"};
    }

    std::optional<model::CapabilityName> capability_of(const std::string& m) const override {
        if (m == "lock") return model::CapabilityName{"lock_lock"};
        if (m == "unlock") return model::CapabilityName{"lock_unlock"};
        if (m == "set_conf") return model::CapabilityName{"lock_setconf"};
        if (m == "get_status") return model::CapabilityName{"lock_getstatus"};
        return std::nullopt;
    }

    Json execute(const std::string& method, const Json& args) override {
        if (method == "get_status") {
            sleep_ms(cfg_.status_time_ms);
            std::lock_guard lock(mutex_);
            return Json{{"locked", locked_}};
        }
        sleep_ms(cfg_.actuation_delay_ms > 0 ? cfg_.actuation_delay_ms : cfg_.service_time_ms);
        std::lock_guard lock(mutex_);
        if (method == "lock") {
            locked_ = true;
        } else if (method == "unlock") {
            locked_ = false;
        } else if (method == "set_conf") {
            if (!args.is_object()) throw Error(Errc::adapter, "set_conf expects an object");
            for (const auto& [k, v] : args.items()) conf_[k] = v;
        } else {
            throw Error(Errc::adapter, "unknown method '" + method + "'");
        }
        return Json{{"locked", locked_}};
    }

    int parallelism() const override { return cfg_.parallelism; }

private:
    AdapterConfig cfg_;
    std::mutex mutex_;
    bool locked_ = true;
    Json conf_ = Json::object();
};

class CameraAdapter : public DeviceAdapter {
public:
    explicit CameraAdapter(AdapterConfig cfg) : cfg_(cfg) {}

    std::string device_type() const override { return "camera"; }

    std::vector<std::string> methods() const override {
        return {"live_stream", "retrieve", "rotate", "get_status"};
    }

    std::optional<model::CapabilityName> capability_of(const std::string& m) const override {
        if (m == "live_stream" || m == "retrieve") return model::CapabilityName{"camera_stream"};
        if (m == "rotate") return model::CapabilityName{"camera_rotate"};
        if (m == "get_status") return model::CapabilityName{"camera_getstatus"};
        return std::nullopt;
    }

    bool is_streaming(const std::string& method) const override { return method == "live_stream"; }

    Json execute(const std::string& method, const Json& args) override {
        if (method == "get_status") {
            sleep_ms(cfg_.status_time_ms);
            std::lock_guard lock(mutex_);
            return Json{{"angle", angle_}, {"frames_served", frames_served_}};
        }
        sleep_ms(cfg_.service_time_ms);
        std::lock_guard lock(mutex_);
        if (method == "rotate") {
            angle_ = (angle_ + args.value("degrees", 90)) % 360;
            return Json{{"angle", angle_}};
        }
        if (method == "retrieve") {
            ++frames_served_;
            return Json{{"data", opaque_blob(cfg_.frame_bytes, frames_served_)}};
        }
        if (method == "live_stream") {
            // Frames are opaque blobs; one request yields `chunks` frames.
            const int n = std::max(1, args.value("chunks", 1));
            Json chunks = Json::array();
            for (int i = 0; i < n; ++i) {
                ++frames_served_;
                chunks.push_back(opaque_blob(cfg_.frame_bytes, frames_served_));
            }
            return Json{{"chunks", std::move(chunks)}};
        }
        throw Error(Errc::adapter, "unknown method '" + method + "'");
    }

    int parallelism() const override { return cfg_.parallelism; }

private:
    AdapterConfig cfg_;
    std::mutex mutex_;
    int angle_ = 0;
    std::uint32_t frames_served_ = 0;
};

// GPU-style shared service (Table I laptop row). The default 18 ms service
// time is a calibration knob for the emulated inference ceiling, not a claim
// about any particular accelerator.
class InferenceAdapter : public DeviceAdapter {
public:
    explicit InferenceAdapter(AdapterConfig cfg) : cfg_(cfg) {
        if (cfg_.service_time_ms <= 0) cfg_.service_time_ms = 18.0;
    }

    std::string device_type() const override { return "laptop"; }

    std::vector<std::string> methods() const override {
        return {"inference_service", "load_image", "process_image", "get_status"};
    }

    std::optional<model::CapabilityName> capability_of(const std::string& m) const override {
        if (m == "inference_service") return model::CapabilityName{"laptop_getinference"};
        if (m == "load_image") return model::CapabilityName{"laptop_loadimage"};
        if (m == "process_image") return model::CapabilityName{"laptop_processimage"};
        if (m == "get_status") return model::CapabilityName{"laptop_getstatus"};
        return std::nullopt;
    }

    Json execute(const std::string& method, const Json& args) override {
        if (method == "get_status") {
            sleep_ms(cfg_.status_time_ms);
            return Json{{"served", served_.load()}, {"model", "resnet152-emulated"}};
        }
        if (method == "load_image") {
            sleep_ms(cfg_.service_time_ms);
            const auto n = served_.fetch_add(1) + 1;
            return Json{{"data", opaque_blob(cfg_.frame_bytes, static_cast<std::uint32_t>(n))}};
        }
        if (method == "inference_service" || method == "process_image") {
            sleep_ms(cfg_.service_time_ms);
            const auto n = served_.fetch_add(1) + 1;
            (void)args;
            return Json{{"label", "object-" + std::to_string(n % 10)},
                        {"confidence", 0.9},
                        {"sequence", n}};
        }
        throw Error(Errc::adapter, "unknown method '" + method + "'");
    }

    int parallelism() const override { return cfg_.parallelism; }

private:
    AdapterConfig cfg_;
    std::atomic<std::uint64_t> served_{0};
};

} // namespace

AdapterConfig AdapterConfig::from_json(const Json& j) {
    AdapterConfig cfg;
    cfg.kind = j.at("kind").get<std::string>();
    cfg.service_time_ms = j.value("service_time_ms", cfg.service_time_ms);
    cfg.status_time_ms = j.value("status_time_ms", cfg.status_time_ms);
    cfg.actuation_delay_ms = j.value("actuation_delay_ms", cfg.actuation_delay_ms);
    cfg.frame_bytes = j.value("frame_bytes", cfg.frame_bytes);
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    if (cfg.parallelism < 1) throw Error(Errc::schema, "adapter parallelism must be >= 1");
    return cfg;
}

std::shared_ptr<DeviceAdapter> make_adapter(const AdapterConfig& config) {
    if (config.kind == "bulb") return std::make_shared<BulbAdapter>(config);
    if (config.kind == "lock") return std::make_shared<LockAdapter>(config);
    if (config.kind == "camera") return std::make_shared<CameraAdapter>(config);
    if (config.kind == "inference" || config.kind == "laptop")
        return std::make_shared<InferenceAdapter>(config);
    throw Error(Errc::schema, "unknown adapter kind '" + config.kind + "'");
}

} // namespace collabiot::proxy
