package org.example.dfs.datanode;

import java.io.IOException;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class Heartbeat {
    private static final Logger LOG = LoggerFactory.getLogger(Heartbeat.class);

    private int missed;

    public void send(boolean urgent) throws IOException {
        if (urgent) {
            LOG.debug("Sending urgent heartbeat");
        }
        if (missed > 3) {
            LOG.error("Heartbeat timeout after " + missed + " attempts");
            throw new IOException("heartbeat");
        }
        missed = 0;
    }
}
