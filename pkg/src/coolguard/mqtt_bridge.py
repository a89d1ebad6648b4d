"""Optional mirror of qos=1 traffic to an external MQTT 3.1.1 broker.

Enabled by setting COOLGUARD_MQTT_URL (e.g. mqtt://host:1883). Requires the
`paho-mqtt` extra; the in-process broker never depends on it.
"""

from __future__ import annotations

from urllib.parse import urlparse


class MqttBridge:
    def __init__(self, url: str):
        try:
            import paho.mqtt.client as mqtt
        except ImportError as exc:  # pragma: no cover - extra not installed
            raise RuntimeError(
                "COOLGUARD_MQTT_URL is set but paho-mqtt is not installed;"
                " install the 'mqtt' extra"
            ) from exc
        parsed = urlparse(url)
        if parsed.scheme not in ("mqtt", "tcp") or not parsed.hostname:
            raise ValueError(f"unsupported MQTT url {url!r}")
        self._client = mqtt.Client(protocol=mqtt.MQTTv311)
        self._client.connect(parsed.hostname, parsed.port or 1883)
        self._client.loop_start()

    def publish(self, topic: str, payload: str) -> None:
        self._client.publish(topic, payload.encode("utf-8"), qos=1)

    def close(self) -> None:  # pragma: no cover - network teardown
        self._client.loop_stop()
        self._client.disconnect()
